"""Noise and survey analytics.

Allan deviation and the white-noise sensitivity derived from it, total
magnetic intensity (TMI), heading error under rotation, base-station diurnal
correction, and inverse-distance-weighted TMI gridding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .geodesy import LocalFrame
from .types import TimeSeries

IDW_POWER = 2.0
IDW_RADIUS_CELLS = 3.0


@dataclass
class AllanCurve:
    """Overlapping Allan deviation per axis; ``deviations`` has shape (k, n_axes)."""

    taus: np.ndarray
    deviations: np.ndarray
    sample_rate: float
    n_samples: int

    def index_of(self, tau):
        hit = np.flatnonzero(np.isclose(self.taus, tau, rtol=1e-9, atol=0.0))
        if hit.size == 0:
            raise ValidationError(f"tau={tau} s not in curve (taus {self.taus.min():.4g}..{self.taus.max():.4g} s)")
        return int(hit[0])

    def knee(self):
        """Averaging time minimizing the deviation, per axis (the drift knee)."""
        return self.taus[np.argmin(self.deviations, axis=0)]

    def slope(self, tau_min, tau_max):
        """Fitted log-log slope per axis over ``[tau_min, tau_max]``."""
        sel = (self.taus >= tau_min) & (self.taus <= tau_max)
        if sel.sum() < 2:
            raise ValidationError("fewer than two taus in the slope range")
        lt = np.log(self.taus[sel])
        return np.array([np.polyfit(lt, np.log(col), 1)[0] for col in self.deviations[sel].T])


def default_taus(n_samples, sample_rate, per_decade=10):
    m_max = (n_samples - 1) // 2
    if m_max < 1:
        return np.zeros(0)
    m = np.unique(np.round(np.logspace(0, np.log10(m_max), int(per_decade * np.log10(m_max)) + 2)).astype(int))
    return m / sample_rate


def allan_deviation(series, sample_rate, taus=None):
    """Overlapping Allan deviation of evenly sampled data.

    Each tau is rounded to a whole number ``m`` of samples. For every ``m``
    the series is averaged over all overlapping windows of ``m`` samples and
    the variance is half the mean squared difference of window means spaced
    ``m`` apart.

    Parameters
    ----------
    series : array_like, shape (n,) or (n, n_axes)
    sample_rate : float
        Hz.
    taus : array_like, optional
        Averaging times in s; defaults to ~10 per decade up to the maximum.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if taus is None:
        taus = default_taus(n, sample_rate)
    m_all = np.unique(np.maximum(np.round(np.asarray(taus, dtype=float) * sample_rate), 1).astype(int))
    m_max = (n - 1) // 2
    if m_all.size and m_all[-1] > m_max:
        raise ValidationError(
            f"series of {n} samples too short for tau={m_all[-1] / sample_rate:g} s; "
            f"largest feasible tau is {m_max / sample_rate:g} s"
        )
    x = x - x.mean(axis=0)
    csum = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    dev = np.empty((m_all.size, x.shape[1]))
    for i, m in enumerate(m_all):
        means = (csum[m:] - csum[:-m]) / m
        d = means[m:] - means[:-m]
        dev[i] = np.sqrt(0.5 * np.mean(d * d, axis=0))
    return AllanCurve(m_all / sample_rate, dev, float(sample_rate), n)


def sensitivity_at(curve, tau=1.0):
    """White-noise amplitude spectral density in pT/sqrt(Hz).

    Uses ``sigma(tau) * sqrt(2 tau)``, the exact inverse of the Allan
    deviation of white noise with one-sided ASD ``S``: ``S / sqrt(2 tau)``.
    """
    i = curve.index_of(tau)
    return curve.deviations[i] * np.sqrt(2.0 * curve.taus[i]) * 1000.0


def white_noise_std(asd_pT, sample_rate):
    """Per-sample standard deviation (nT) of white noise with the given ASD."""
    return np.asarray(asd_pT, dtype=float) * 1e-3 * np.sqrt(sample_rate / 2.0)


def compute_tmi(field):
    """Euclidean norm along the last axis."""
    return np.linalg.norm(np.asarray(field, dtype=float), axis=-1)


@dataclass
class HeadingError:
    max_abs: float
    std: float
    mean: float


def heading_error(series, reference_tmi):
    """Deviation of TMI from a known constant during rotation."""
    fields = series.field if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if len(fields) == 0:
        raise ValidationError("heading_error needs a nonempty series")
    dev = compute_tmi(fields) - reference_tmi
    return HeadingError(float(np.abs(dev).max()), float(dev.std()), float(dev.mean()))


def diurnal_correct(survey, base):
    """Remove base-station variations: ``survey - (base(t) - mean(base))``.

    The base series is linearly interpolated to the survey timestamps.
    """
    if len(base) < 2:
        raise ValidationError("base series needs at least two samples")
    t0, t1 = base.t[0], base.t[-1]
    outside = (survey.t < t0) | (survey.t > t1)
    if np.any(outside):
        bad = survey.t[outside]
        raise ValidationError(
            f"survey times {bad.min():.6g}..{bad.max():.6g} s not covered by base {t0:.6g}..{t1:.6g} s"
        )
    mean = base.field.mean(axis=0)
    interp = np.column_stack([np.interp(survey.t, base.t, base.field[:, k]) for k in range(3)])
    return survey.with_field(survey.field - (interp - mean))


@dataclass
class GridSpec:
    """Regular grid of cell centers in local metres (east = x, north = y)."""

    x0: float
    y0: float
    spacing: float
    nx: int
    ny: int
    frame: LocalFrame = LocalFrame()

    def __post_init__(self):
        if not self.spacing > 0 or self.nx < 1 or self.ny < 1:
            raise ValidationError("grid spacing must be positive and dims at least 1")

    @classmethod
    def covering(cls, east, north, spacing, frame=None, pad=0):
        x0 = np.floor(np.min(east) / spacing) * spacing - pad * spacing
        y0 = np.floor(np.min(north) / spacing) * spacing - pad * spacing
        nx = int(np.floor((np.max(east) - x0) / spacing)) + 1 + pad
        ny = int(np.floor((np.max(north) - y0) / spacing)) + 1 + pad
        return cls(float(x0), float(y0), float(spacing), nx, ny, frame or LocalFrame())

    def centers(self):
        xs = self.x0 + self.spacing * np.arange(self.nx)
        ys = self.y0 + self.spacing * np.arange(self.ny)
        return xs, ys

    def contains(self, east, north):
        half = 0.5 * self.spacing
        return (
            (east >= self.x0 - half)
            & (east <= self.x0 + (self.nx - 0.5) * self.spacing)
            & (north >= self.y0 - half)
            & (north <= self.y0 + (self.ny - 0.5) * self.spacing)
        )


@dataclass
class TmiGrid:
    """Gridded TMI; ``values[j, i]`` is the cell at north index j, east index i."""

    origin: tuple
    spacing: float
    values: np.ndarray
    hit_count: np.ndarray
    spec: GridSpec | None = None

    def argmax_cell(self, values=None):
        v = self.values if values is None else values
        j, i = np.unravel_index(np.nanargmax(v), v.shape)
        return int(j), int(i)


def _points_local(points, frame):
    if isinstance(points, TimeSeries):
        if points.geo is None:
            raise ValidationError("grid_tmi_map needs geo-referenced readings")
        east, north = frame.to_local(points.geo[:, 0], points.geo[:, 1])
        return east, north, compute_tmi(points.field)
    pts = np.asarray(points, dtype=float)
    return pts[:, 0], pts[:, 1], pts[:, 2]


def grid_tmi_map(points, grid=None, spacing=None, frame=None):
    """Inverse-distance-weighted TMI map.

    Parameters
    ----------
    points : TimeSeries with ``geo`` or array of (east_m, north_m, tmi_nT)
    grid : GridSpec, optional
        Defaults to the bounding box of the points at ``spacing``.

    Cells with no reading within ``3 * spacing`` are NaN with zero hits.
    """
    frame = frame or (grid.frame if grid is not None else LocalFrame())
    east, north, tmi = _points_local(points, frame)
    if grid is None:
        if spacing is None:
            raise ValidationError("need a GridSpec or a spacing")
        grid = GridSpec.covering(east, north, spacing, frame)
    inside = grid.contains(east, north)
    if not np.any(inside):
        raise ValidationError("no readings inside the grid bounds")

    xs, ys = grid.centers()
    gx, gy = np.meshgrid(xs, ys)
    cells = np.column_stack([gx.ravel(), gy.ravel()])
    tree = cKDTree(np.column_stack([east, north]))
    radius = IDW_RADIUS_CELLS * grid.spacing
    values = np.full(cells.shape[0], np.nan)
    hits = np.zeros(cells.shape[0], dtype=int)
    tiny = 1e-9 * grid.spacing
    for c, idx in enumerate(tree.query_ball_point(cells, radius)):
        if not idx:
            continue
        idx = np.asarray(idx)
        d = np.hypot(east[idx] - cells[c, 0], north[idx] - cells[c, 1])
        v = tmi[idx]
        # canonical summation order makes the result independent of input order
        order = np.lexsort((v, d))
        d, v = d[order], v[order]
        hits[c] = idx.size
        if d[0] < tiny:
            values[c] = v[d < tiny].mean()
        else:
            w = d ** (-IDW_POWER)
            values[c] = (w @ v) / w.sum()
    lat, lon = frame.to_geo(grid.x0, grid.y0)
    return TmiGrid(
        (float(lat), float(lon)),
        grid.spacing,
        values.reshape(grid.ny, grid.nx),
        hits.reshape(grid.ny, grid.nx),
        grid,
    )


__all__ = [
    "AllanCurve",
    "allan_deviation",
    "sensitivity_at",
    "white_noise_std",
    "default_taus",
    "compute_tmi",
    "HeadingError",
    "heading_error",
    "diurnal_correct",
    "GridSpec",
    "TmiGrid",
    "grid_tmi_map",
]
