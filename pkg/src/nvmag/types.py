"""Data containers passed between the physics, spectral and inversion stages."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError

FRAMES = ("sensor", "geographic")


@dataclass(frozen=True)
class FieldVector:
    """Three-component magnetic field in nT."""

    bx: float
    by: float
    bz: float
    frame: str = "sensor"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValidationError(f"unknown frame {self.frame!r}, expected one of {FRAMES}")
        if not np.all(np.isfinite([self.bx, self.by, self.bz])):
            raise ValidationError("field components must be finite")

    @classmethod
    def from_array(cls, values, frame="sensor"):
        v = np.asarray(values, dtype=float).reshape(3)
        return cls(float(v[0]), float(v[1]), float(v[2]), frame)

    def as_array(self):
        return np.array([self.bx, self.by, self.bz])

    def __array__(self, dtype=None, copy=None):
        return self.as_array().astype(dtype) if dtype is not None else self.as_array()

    def norm(self):
        return float(np.linalg.norm(self.as_array()))


@dataclass
class OdmrSpectrum:
    """Photoluminescence contrast sampled on an increasing frequency grid (Hz)."""

    freqs: np.ndarray
    contrast: np.ndarray
    frame_id: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.contrast = np.asarray(self.contrast, dtype=float)
        if self.freqs.ndim != 1 or self.freqs.shape != self.contrast.shape:
            raise ValidationError("freqs and contrast must be 1-D arrays of equal length")
        if self.freqs.size < 2 or np.any(np.diff(self.freqs) <= 0):
            raise ValidationError("freqs must be strictly increasing with at least two samples")

    def subset(self, mask):
        """Spectrum restricted to the samples where ``mask`` is true."""
        mask = np.asarray(mask, dtype=bool)
        return OdmrSpectrum(self.freqs[mask], self.contrast[mask], self.frame_id, self.timestamp)

    @property
    def step(self):
        return float(np.max(np.diff(self.freqs)))


@dataclass
class PeakSet:
    """Resonance centers (Hz, ascending) paired into axis doublets.

    ``pairing`` maps axis index to ``(lower, upper)`` indices into ``centers``.
    ``widths``, ``contrasts`` and ``baseline`` are filled in by the fitter and
    left as ``None`` for forward-model predictions.
    """

    centers: np.ndarray
    sigmas: np.ndarray
    pairing: dict = field(default_factory=dict)
    fit_quality: float = 0.0
    widths: np.ndarray | None = None
    contrasts: np.ndarray | None = None
    baseline: float | None = None

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if self.centers.shape != self.sigmas.shape or self.centers.ndim != 1:
            raise ValidationError("centers and sigmas must be 1-D arrays of equal length")
        if np.any(np.diff(self.centers) < 0):
            raise ValidationError("centers must be in ascending order")
        if self.pairing:
            self._check_pairing()

    def _check_pairing(self):
        used = sorted(i for pair in self.pairing.values() for i in pair)
        if used != list(range(self.centers.size)):
            raise ValidationError("pairing must be a perfect matching of all peaks")
        for axis, (lo, hi) in self.pairing.items():
            if not self.centers[lo] <= self.centers[hi] or lo == hi:
                raise ValidationError(f"pair for axis {axis} is not ordered lower < upper")

    @property
    def n_peaks(self):
        return self.centers.size

    @property
    def axes(self):
        return sorted(self.pairing)

    def require_pairing(self, n_axes=4):
        if sorted(self.pairing) != list(range(n_axes)) or self.centers.size != 2 * n_axes:
            raise ValidationError(f"PeakSet needs {2 * n_axes} peaks paired into {n_axes} axes")

    def pair_frequencies(self):
        """Arrays ``(lower, upper)`` ordered by axis index."""
        lo = np.array([self.centers[self.pairing[a][0]] for a in self.axes])
        hi = np.array([self.centers[self.pairing[a][1]] for a in self.axes])
        return lo, hi

    def pair_sigmas(self):
        lo = np.array([self.sigmas[self.pairing[a][0]] for a in self.axes])
        hi = np.array([self.sigmas[self.pairing[a][1]] for a in self.axes])
        return lo, hi

    def axis_of(self, peak_index):
        for axis, pair in self.pairing.items():
            if peak_index in pair:
                return axis
        return None

    def with_pairing(self, pairing):
        return replace(self, pairing=dict(pairing))


@dataclass
class MagReading:
    """One inverted frame: external field, diamond temperature and diagnostics."""

    timestamp: float
    field: FieldVector
    diamond_temp: float
    inversion_residual: float = 0.0
    field_sigma: np.ndarray = field(default_factory=lambda: np.zeros(3))
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        self.field_sigma = np.asarray(self.field_sigma, dtype=float).reshape(3)
        if self.inversion_residual < 0 or np.any(self.field_sigma < 0):
            raise ValidationError("residual and sigmas must be non-negative")


@dataclass
class TimeSeries:
    """Columnar series of field readings, the in-memory twin of the CSV format.

    ``geo`` holds ``(lat_deg, lon_deg, alt_m)`` rows for geo-referenced data.
    """

    t: np.ndarray
    field: np.ndarray
    temp: np.ndarray
    geo: np.ndarray | None = None
    frame: str = "sensor"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        n = self.t.size
        self.field = np.asarray(self.field, dtype=float).reshape(n, 3)
        temp = np.asarray(self.temp, dtype=float)
        self.temp = np.full(n, float(temp)) if temp.ndim == 0 else temp.reshape(n)
        if self.geo is not None:
            self.geo = np.asarray(self.geo, dtype=float).reshape(n, 3)

    def __len__(self):
        return self.t.size

    @classmethod
    def from_readings(cls, readings, geo=None):
        readings = list(readings)
        if not readings:
            return cls(np.zeros(0), np.zeros((0, 3)), np.zeros(0), geo)
        return cls(
            np.array([r.timestamp for r in readings]),
            np.array([r.field.as_array() for r in readings]),
            np.array([r.diamond_temp for r in readings]),
            geo,
            readings[0].field.frame,
        )

    def readings(self):
        return [
            MagReading(float(t), FieldVector.from_array(b, self.frame), float(temp))
            for t, b, temp in zip(self.t, self.field, self.temp)
        ]

    def with_field(self, field_values):
        return replace(self, field=np.asarray(field_values, dtype=float).copy())

    def select(self, mask):
        mask = np.asarray(mask)
        geo = None if self.geo is None else self.geo[mask]
        return TimeSeries(self.t[mask], self.field[mask], self.temp[mask], geo, self.frame)
