"""From a field vector to an ODMR spectrum and back.

The bias magnets split the eight resonances of the four NV axes. We
synthesize the spectrum for a small external field, find the dips, fit
Lorentzians and invert the fitted centers to a field and a temperature.
"""

import numpy as np

from nvmag.inversion import invert_frame
from nvmag.nv_physics import BiasFieldConfig, NvConstants, forward_resonances, synthesize_spectrum
from nvmag.spectral import detect_peaks, fit_lorentzians, pair_peaks

const = NvConstants()
bias = BiasFieldConfig()
external = np.array([1200.0, -800.0, 2500.0])  # nT
temperature = 303.15

# Resonance positions for bias plus external field, eight lines around D(T).
truth = forward_resonances(bias.vector(temperature) + external, temperature)
print("line centers (MHz):", np.round(truth.centers / 1e6, 4))

spectrum = synthesize_spectrum(truth, noise_std=2e-5, noise_seed=1)
print(f"spectrum: {spectrum.freqs.size} points, deepest dip {spectrum.contrast.max() - spectrum.contrast.min():.4f}")

# Dip detection gives rough guesses; the fit refines them and reports sigmas.
guesses = detect_peaks(spectrum, 8)
fitted = fit_lorentzians(spectrum, guesses)
print("fit residual (kHz):", np.round((fitted.centers - truth.centers) / 1e3, 2))

# Pair the fitted lines with the predicted ones, then invert.
predicted = forward_resonances(bias.vector(temperature), temperature)
peaks = pair_peaks(fitted, predicted)
reading = invert_frame(peaks, const, bias=bias)
print("recovered field (nT):", np.round(reading.field.as_array(), 2), "truth:", external)
print(f"recovered temperature {reading.diamond_temp:.3f} K (truth {temperature} K)")
print("field sigma (nT):", np.round(reading.field_sigma, 3))
