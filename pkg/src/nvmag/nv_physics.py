"""Forward model of an NV-diamond vector magnetometer.

Covers the tetrahedral NV axis set, resonance frequencies under a field and a
diamond temperature (first-order axial Zeeman model), synthetic ODMR spectra
with Lorentzian lines, and the affine sensor imperfections that calibration
has to undo.

Units: fields in nT, frequencies in Hz, temperatures in K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, ModelRangeError, ValidationError
from .types import FieldVector, OdmrSpectrum, PeakSet

TEMP_RANGE_K = (150.0, 450.0)
DEFAULT_VALIDITY_NT = 2.0e6  # 2 mT per-axis projection


@dataclass(frozen=True)
class NvConstants:
    """Zero-field splitting, its temperature slope and the gyromagnetic ratio."""

    D0: float = 2.870e9
    beta: float = -74.2e3
    gamma: float = 28.024
    T0: float = 298.15

    def __post_init__(self):
        if self.D0 == 0 or self.T0 == 0:
            raise ValidationError("D0 and T0 must be nonzero")
        if not self.gamma > 0:
            raise ValidationError("gamma must be positive")
        if not self.beta < 0:
            raise ValidationError("beta must be negative")


@dataclass(frozen=True)
class SensorGeometry:
    """Four NV axis unit vectors stacked as the rows of a 4x3 matrix."""

    axes: np.ndarray

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=float)
        if axes.shape != (4, 3):
            raise ValidationError("geometry needs four 3-vectors")
        object.__setattr__(self, "axes", axes)

    @property
    def matrix(self):
        return self.axes

    def pinv(self):
        return np.linalg.pinv(self.axes)


def tetrahedral_axes():
    """Canonical NV orientations <111> normalized to unit length."""
    axes = np.array(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
    ) / np.sqrt(3.0)
    return SensorGeometry(axes)


# Bias chosen so the signed projections are (540, 180, -300, -420) uT:
# distinct magnitudes 120 uT apart, all above any 60 uT external field.
DEFAULT_BIAS_NT = (623538.2907247958, 207846.09690826527, 103923.04845413264)


@dataclass(frozen=True)
class BiasFieldConfig:
    """Static bias field at the diamond and its linear temperature drift."""

    bias_vector: tuple = DEFAULT_BIAS_NT
    temp_coefficient: tuple = (0.0, 0.0, 0.0)
    reference_temperature: float = 298.15
    separation_margin: float = 20000.0
    max_external: float = 60000.0

    def __post_init__(self):
        for name in ("bias_vector", "temp_coefficient"):
            value = np.asarray(getattr(self, name), dtype=float).reshape(3)
            object.__setattr__(self, name, tuple(float(v) for v in value))

    def vector(self, temperature=None):
        """Bias field in nT, adjusted for temperature when one is given."""
        b = np.array(self.bias_vector)
        if temperature is None:
            return b
        return b + np.array(self.temp_coefficient) * (temperature - self.reference_temperature)

    def projections(self, geometry=None, temperature=None):
        geometry = geometry or tetrahedral_axes()
        return geometry.axes @ self.vector(temperature)

    def validate(self, geometry=None):
        """Raise if the bias does not separate and sign-fix every axis."""
        mags = np.abs(self.projections(geometry))
        if np.any(mags <= self.max_external):
            raise ConfigurationError(
                f"bias projections {mags} nT must exceed max external field {self.max_external} nT"
            )
        gaps = np.diff(np.sort(mags))
        if np.any(gaps < self.separation_margin):
            raise ConfigurationError(
                f"bias projections {mags} nT are not separated by {self.separation_margin} nT"
            )
        return self


@dataclass(frozen=True)
class LineParams:
    """Lorentzian line shape shared by all eight resonances."""

    linewidth_fwhm: float = 1.0e6
    contrast: float = 0.02
    baseline: float = 1.0

    def __post_init__(self):
        if not self.linewidth_fwhm > 0:
            raise ValidationError("linewidth must be positive")
        if not 0 < self.contrast < 1:
            raise ValidationError("contrast must lie in (0, 1)")


def _shear(angles):
    a = np.asarray(angles, dtype=float).reshape(3)
    return np.array([[1.0, 0.0, 0.0], [a[0], 1.0, 0.0], [a[1], a[2], 1.0]])


def scale_shear_matrix(scale, angles):
    """``diag(scale) @ L`` with L unit lower-triangular.

    ``angles`` fill L below the diagonal in the order (yx, zx, zy), which are
    reported as the X, Y, Z orthogonality entries of a calibration table.
    """
    return np.diag(np.asarray(scale, dtype=float).reshape(3)) @ _shear(angles)


@dataclass(frozen=True)
class ImperfectionModel:
    """Affine sensor distortion: scale, non-orthogonality, offset and noise."""

    scale: tuple = (1.0, 1.0, 1.0)
    misalignment: tuple = (0.0, 0.0, 0.0)
    offset: tuple = (0.0, 0.0, 0.0)
    offset_temp_slope: tuple = (0.0, 0.0, 0.0)
    noise_std: tuple = (0.0, 0.0, 0.0)
    reference_temperature: float = 298.15

    def __post_init__(self):
        for name in ("scale", "misalignment", "offset", "offset_temp_slope", "noise_std"):
            value = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (3,))
            object.__setattr__(self, name, tuple(float(v) for v in value))
        s = np.array(self.scale)
        if np.any(s <= 0.9) or np.any(s >= 1.1):
            raise ValidationError(f"scale entries must lie in (0.9, 1.1), got {s}")
        if np.any(np.abs(self.misalignment) >= 0.1):
            raise ValidationError("misalignment angles must be below 0.1 rad")
        if np.any(np.array(self.noise_std) < 0):
            raise ValidationError("noise_std must be non-negative")

    @classmethod
    def identity(cls, noise_std=0.0):
        return cls(noise_std=noise_std)

    @classmethod
    def table1_before(cls, noise_std=0.0, offset_temp_slope=0.0):
        """Uncalibrated unit parameters: scale, orthogonality (rad), offset (nT)."""
        return cls(
            scale=(1.00323, 1.00950, 1.00209),
            misalignment=(860e-5, 336e-5, 115e-5),
            offset=(314.0, -86.0, -2244.0),
            offset_temp_slope=offset_temp_slope,
            noise_std=noise_std,
        )

    @property
    def matrix(self):
        return scale_shear_matrix(self.scale, self.misalignment)

    def offset_at(self, temperature):
        """Offset in nT at the given temperature(s); shape (3,) or (n, 3)."""
        dt = np.asarray(temperature, dtype=float) - self.reference_temperature
        return np.array(self.offset) + np.multiply.outer(dt, np.array(self.offset_temp_slope))


def zero_field_splitting(temperature, constants=None):
    """Common-mode resonance position D(T) = D0 + beta*(T - T0) in Hz."""
    constants = constants or NvConstants()
    t = np.asarray(temperature, dtype=float)
    if np.any(t < TEMP_RANGE_K[0]) or np.any(t > TEMP_RANGE_K[1]):
        raise DomainError(f"temperature {temperature} K outside {TEMP_RANGE_K}")
    d = constants.D0 + constants.beta * (t - constants.T0)
    return float(d) if d.ndim == 0 else d


def forward_resonances(
    total_field, temperature, geometry=None, constants=None, validity_threshold=DEFAULT_VALIDITY_NT
):
    """Eight resonance frequencies for a total field (bias included) in nT.

    Axis ``i`` contributes the doublet ``D(T) -/+ gamma*|B . n_i|``. Peaks are
    returned in ascending order with the pairing recording which two belong to
    which axis.
    """
    geometry = geometry or tetrahedral_axes()
    constants = constants or NvConstants()
    b = np.asarray(total_field, dtype=float).reshape(3)
    proj = np.abs(geometry.axes @ b)
    if np.any(proj > validity_threshold):
        raise ModelRangeError(
            f"axis projection {proj.max():.6g} nT exceeds validity threshold {validity_threshold:.6g} nT"
        )
    d = zero_field_splitting(temperature, constants)
    lower = d - constants.gamma * proj
    upper = d + constants.gamma * proj
    raw = np.concatenate([lower, upper])
    order = np.argsort(raw, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    n = proj.size
    pairing = {i: (int(rank[i]), int(rank[n + i])) for i in range(n)}
    # stable sort keeps lower before upper on exact ties (zero projection)
    return PeakSet(raw[order], np.zeros(2 * n), pairing)


def lorentzian(freqs, center, fwhm):
    """Unit-height Lorentzian."""
    x = (np.asarray(freqs, dtype=float) - center) / (0.5 * fwhm)
    return 1.0 / (1.0 + x * x)


def frequency_grid(constants=None, half_span=24.0e6, step=100.0e3, temperature=None):
    """Uniform grid centered on D(T) (or D0)."""
    constants = constants or NvConstants()
    center = constants.D0 if temperature is None else zero_field_splitting(temperature, constants)
    n = int(round(2 * half_span / step))
    return center - half_span + step * np.arange(n + 1)


def synthesize_spectrum(
    peaks, line=None, freq_grid=None, noise_seed=None, noise_std=0.0, frame_id=0, timestamp=0.0
):
    """ODMR contrast ``baseline - sum_k contrast*L(f; f_k, fwhm)`` plus noise.

    ``noise_std`` is the Gaussian noise standard deviation in contrast units,
    drawn from ``numpy.random.default_rng(noise_seed)``.
    """
    line = line or LineParams()
    freqs = np.asarray(freq_grid if freq_grid is not None else frequency_grid(), dtype=float)
    centers = np.asarray(peaks.centers if isinstance(peaks, PeakSet) else peaks, dtype=float)
    fwhm = line.linewidth_fwhm
    if freqs.size < 2 or np.max(np.diff(freqs)) > fwhm / 4:
        raise ConfigurationError(f"grid step must be <= fwhm/4 = {fwhm / 4:.6g} Hz")
    lo, hi = freqs[0] + 3 * fwhm, freqs[-1] - 3 * fwhm
    if centers.size and (centers.min() < lo or centers.max() > hi):
        raise ConfigurationError("peak centers must lie at least 3 linewidths inside the grid")
    contrast = np.full(freqs.shape, line.baseline)
    for c in centers:
        contrast -= line.contrast * lorentzian(freqs, c, fwhm)
    if noise_std > 0:
        rng = np.random.default_rng(noise_seed)
        contrast = contrast + rng.normal(0.0, noise_std, freqs.size)
    return OdmrSpectrum(freqs, contrast, frame_id, timestamp)


def apply_imperfections(true_field, model, temperature=None, rng=None):
    """Distort true field(s) ``(3,)`` or ``(n, 3)``: ``M @ B + offset(T) + noise``."""
    b = np.asarray(true_field, dtype=float)
    single = b.ndim == 1
    b = np.atleast_2d(b)
    if temperature is None:
        temperature = model.reference_temperature
    temps = np.broadcast_to(np.asarray(temperature, dtype=float), (b.shape[0],))
    out = b @ model.matrix.T + model.offset_at(temps)
    sigma = np.array(model.noise_std)
    if np.any(sigma > 0):
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        out = out + rng.normal(size=out.shape) * sigma
    if single:
        return FieldVector.from_array(out[0], getattr(true_field, "frame", "sensor"))
    return out


__all__ = [
    "NvConstants",
    "SensorGeometry",
    "BiasFieldConfig",
    "LineParams",
    "ImperfectionModel",
    "tetrahedral_axes",
    "zero_field_splitting",
    "forward_resonances",
    "lorentzian",
    "frequency_grid",
    "synthesize_spectrum",
    "apply_imperfections",
    "scale_shear_matrix",
]
