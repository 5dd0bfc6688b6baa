"""Noise floor of a shielded chamber run.

A 120 s chamber recording at 10 Hz with per-axis white noise set to
346/434/401 pT/sqrt(Hz). The overlapping Allan deviation falls as
tau^-1/2 and its value at 1 s gives back the sensitivity. Adding a slow
drift turns the curve up again; the minimum is the knee.
"""

import numpy as np

from nvmag.analysis import allan_deviation, sensitivity_at, white_noise_std
from nvmag.scenarios import Scenario, chamber_imperfections, measure

rate = 10.0
asd = np.array([346.0, 434.0, 401.0])
sc = Scenario("chamber", {"duration": 120.0}, sample_rate=rate, seed=11)
truth, _ = sc.truth()
readings = measure(truth, chamber_imperfections(asd, rate), sc.seed)

curve = allan_deviation(readings.field, rate)
print(" tau_s   sigma_x   sigma_y   sigma_z  (nT)")
for tau, row in zip(curve.taus, curve.deviations):
    print(f"{tau:6.2f}  " + "  ".join(f"{v:8.4f}" for v in row))
print("sensitivity at 1 s (pT/sqrt(Hz)):", np.round(sensitivity_at(curve, 1.0), 1), "setpoint:", asd)

# One hour of 400 pT/sqrt(Hz) noise, then the same with 50 pT/s drift.
t = np.arange(36000) / rate
x = np.random.default_rng(3).normal(0, white_noise_std(400.0, rate), t.size)
print(f"white-noise slope over 0.2-5 s: {allan_deviation(x, rate).slope(0.2, 5.0)[0]:.3f}")
drift_curve = allan_deviation(x + 0.05 * t, rate)
print(f"knee with drift: {drift_curve.knee()[0]:.2f} s (analytic 3.17 s)")
