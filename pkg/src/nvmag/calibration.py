"""Vector calibration: affine fit against a reference, temperature drift
regression, and constant-TMI spin (ellipsoid) calibration.

A calibration maps a measured field to a corrected one::

    corrected = matrix @ measured + offset + temp_coeffs * (T - ref_temp)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CoverageError, IllPosedError, ValidationError
from .nv_physics import scale_shear_matrix
from .types import FieldVector, MagReading, TimeSeries

MIN_AFFINE_POINTS = 12
MIN_SPIN_POINTS = 50
MAX_SPIN_GAP_DEG = 60.0
MIN_TEMP_SPAN_K = 5.0
MAX_TABLE_ANGLE = 0.1


@dataclass(frozen=True)
class CalibrationModel:
    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    temp_coeffs: np.ndarray | None = None
    ref_temp: float | None = None
    fit_report: dict = field(default_factory=dict)
    fitted_at: str | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).reshape(3, 3)
        o = np.asarray(self.offset, dtype=float).reshape(3)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(o))):
            raise ValidationError("calibration entries must be finite")
        if abs(np.linalg.det(m)) <= 0.5:
            raise ValidationError(f"calibration matrix determinant {np.linalg.det(m):.4g} too small")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", o)
        if self.temp_coeffs is not None:
            object.__setattr__(self, "temp_coeffs", np.asarray(self.temp_coeffs, dtype=float).reshape(3))
            if self.ref_temp is None:
                raise ValidationError("temp_coeffs need a reference temperature")

    @classmethod
    def identity(cls):
        return cls()

    def correct(self, fields, temps=None):
        """Apply to ``(3,)`` or ``(n, 3)`` field arrays."""
        b = np.asarray(fields, dtype=float)
        out = b @ self.matrix.T + self.offset
        if self.temp_coeffs is not None and temps is not None:
            dt = np.asarray(temps, dtype=float) - self.ref_temp
            out = out + np.multiply.outer(dt, self.temp_coeffs)
        return out


def inverse_of_imperfections(model):
    """Exact correction for an :class:`ImperfectionModel` (noise aside)."""
    inv = np.linalg.inv(model.matrix)
    return CalibrationModel(
        inv,
        -inv @ np.array(model.offset),
        -inv @ np.array(model.offset_temp_slope),
        model.reference_temperature,
    )


def apply_calibration(model, reading):
    """Correct a :class:`MagReading`, a :class:`TimeSeries` or a raw array."""
    if isinstance(reading, MagReading):
        b = model.correct(reading.field.as_array(), reading.diamond_temp)
        sigma = np.sqrt((model.matrix**2) @ reading.field_sigma**2)
        return replace(reading, field=FieldVector.from_array(b, reading.field.frame), field_sigma=sigma)
    if isinstance(reading, TimeSeries):
        return reading.with_field(model.correct(reading.field, reading.temp))
    return model.correct(reading)


def _stack_pairs(pairs):
    measured = np.array([np.asarray(m, dtype=float).reshape(3) for m, _ in pairs])
    reference = np.array([np.asarray(r, dtype=float).reshape(3) for _, r in pairs])
    return measured, reference


def fit_affine_calibration(measured, reference=None, temps=None):
    """Least-squares ``reference ~ matrix @ measured + offset (+ c*(T-Tref))``.

    ``measured`` may also be a list of ``(measured, reference)`` pairs, in
    which case ``reference`` is omitted.
    """
    if reference is None:
        measured, reference = _stack_pairs(measured)
    x = np.asarray(measured, dtype=float).reshape(-1, 3)
    y = np.asarray(reference, dtype=float).reshape(-1, 3)
    n = x.shape[0]
    if n < MIN_AFFINE_POINTS or y.shape[0] != n:
        raise IllPosedError(f"need at least {MIN_AFFINE_POINTS} matched pairs, got {n}")
    centered = x - x.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9 * max(np.abs(centered).max(), 1.0)) < 3:
        raise IllPosedError("measured fields do not span three non-coplanar directions")

    cols = [x, np.ones((n, 1))]
    ref_temp = None
    if temps is not None:
        t = np.asarray(temps, dtype=float).reshape(n)
        ref_temp = float(t.mean())
        cols.append((t - ref_temp)[:, None])
    design = np.hstack(cols)
    # column scaling keeps the nT-sized and unit columns comparable
    norms = np.linalg.norm(design, axis=0)
    norms[norms == 0] = 1.0
    coef, _, rank, _ = np.linalg.lstsq(design / norms, y, rcond=None)
    if rank < design.shape[1]:
        raise IllPosedError("calibration design matrix is rank deficient")
    coef = coef / norms[:, None]
    residual = y - design @ coef
    report = {
        "n_points": n,
        "residual_mean": residual.mean(axis=0),
        "residual_std": residual.std(axis=0, ddof=1),
        "max_abs_error": float(np.abs(residual).max()),
    }
    return CalibrationModel(
        coef[:3].T,
        coef[3],
        coef[4] if temps is not None else None,
        ref_temp,
        report,
    )


@dataclass
class CalTable:
    """Per-axis scale, orthogonality (rad) and offset (nT).

    ``rotation`` holds the orthogonal factor left over when a general matrix
    is split as ``rotation @ diag(scale) @ shear``; it is the identity for
    models built from a table.
    """

    scale: np.ndarray
    orthogonality: np.ndarray
    offset: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    temp_coeffs: np.ndarray | None = None
    ref_temp: float | None = None

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=float).reshape(3)
        self.orthogonality = np.asarray(self.orthogonality, dtype=float).reshape(3)
        self.offset = np.asarray(self.offset, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)

    def format(self, residual_std=None):
        lines = ["axis  scale       orthogonality_rad  offset_nT" + ("  residual_std_nT" if residual_std is not None else "")]
        for i, name in enumerate("XYZ"):
            row = f"{name}     {self.scale[i]:.5f}     {self.orthogonality[i]: .3e}         {self.offset[i]: .2f}"
            if residual_std is not None:
                row += f"  {residual_std[i]:.3f}"
            lines.append(row)
        return "\n".join(lines)


def _ql(m):
    """``m = q @ l`` with q orthogonal and l lower triangular, diag(l) > 0."""
    flip = np.eye(3)[::-1]
    q, r = np.linalg.qr(flip @ m @ flip)
    q, l = flip @ q @ flip, flip @ r @ flip
    signs = np.sign(np.diag(l))
    signs[signs == 0] = 1.0
    return q * signs, signs[:, None] * l


def cal_table(model):
    """Decompose ``model.matrix = rotation @ diag(scale) @ shear``."""
    rotation, lower = _ql(model.matrix)
    scale = np.diag(lower).copy()
    unit = lower / scale[:, None]
    ortho = np.array([unit[1, 0], unit[2, 0], unit[2, 1]])
    if np.max(np.abs(ortho)) > MAX_TABLE_ANGLE:
        warnings.warn("calibration matrix is far from identity; orthogonality angles exceed 0.1 rad")
    return CalTable(scale, ortho, model.offset.copy(), rotation, model.temp_coeffs, model.ref_temp)


def from_table(table):
    matrix = table.rotation @ scale_shear_matrix(table.scale, table.orthogonality)
    return CalibrationModel(matrix, table.offset, table.temp_coeffs, table.ref_temp)


@dataclass
class TemperatureFit:
    """Per-axis offset drift: ``offset(T) = intercept + slope * (T - ref_temp)``."""

    slope: np.ndarray
    intercept: np.ndarray
    slope_se: np.ndarray
    intercept_se: np.ndarray
    ref_temp: float

    def correction(self, base=None):
        """Calibration that removes this drift, composed after ``base``."""
        base = base or CalibrationModel()
        # drift measured after base is applied, so subtract it in corrected space
        coeffs = -self.slope
        offset = base.offset - self.intercept
        if base.temp_coeffs is not None:
            coeffs = coeffs + base.temp_coeffs
            offset = offset + base.temp_coeffs * (self.ref_temp - base.ref_temp)
        return CalibrationModel(base.matrix, offset, coeffs, self.ref_temp, dict(base.fit_report), base.fitted_at)


def fit_temperature_model(readings, known_constant_field, ref_temp=None):
    """Regress ``reading - known_field`` on diamond temperature, per axis."""
    if not isinstance(readings, TimeSeries):
        readings = TimeSeries.from_readings(readings)
    t = readings.temp
    if t.size < 3 or np.ptp(t) < MIN_TEMP_SPAN_K:
        raise IllPosedError(f"temperature span {np.ptp(t) if t.size else 0:.3f} K below {MIN_TEMP_SPAN_K} K")
    ref = float(t.mean()) if ref_temp is None else float(ref_temp)
    y = readings.field - np.asarray(known_constant_field, dtype=float).reshape(3)
    x = np.column_stack([np.ones_like(t), t - ref])
    coef, _, _, _ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    dof = t.size - 2
    s2 = (resid**2).sum(axis=0) / dof
    cov_unit = np.linalg.inv(x.T @ x)
    se = np.sqrt(np.outer(np.diag(cov_unit), s2))
    return TemperatureFit(coef[1], coef[0], se[1], se[0], ref)


def fibonacci_sphere(n=2000):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + 5**0.5) * i
    r = np.sqrt(1.0 - z * z)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def angular_coverage(fields, n_probe=2000):
    """Largest angle (deg) from any direction to the nearest reading direction,
    and the solid angle (sr) within half that limit of some reading."""
    d = np.asarray(fields, dtype=float)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    probes = fibonacci_sphere(n_probe)
    cos_best = (probes @ d.T).max(axis=1)
    gaps = np.degrees(np.arccos(np.clip(cos_best, -1.0, 1.0)))
    covered = 4.0 * np.pi * np.mean(gaps < MAX_SPIN_GAP_DEG / 2.0)
    return float(gaps.max()), float(covered)


def _fit_quadric(x):
    """Ellipsoid ``(x - o)^T Q (x - o) = 1`` by algebraic least squares."""
    mu = x.mean(axis=0)
    s = np.sqrt(np.mean(np.sum((x - mu) ** 2, axis=1)))
    z = (x - mu) / s
    z1, z2, z3 = z.T
    design = np.column_stack(
        [z1 * z1, z2 * z2, z3 * z3, 2 * z1 * z2, 2 * z1 * z3, 2 * z2 * z3, 2 * z1, 2 * z2, 2 * z3, np.ones_like(z1)]
    )
    _, vecs = np.linalg.eigh(design.T @ design)
    v = vecs[:, 0]
    a = np.array([[v[0], v[3], v[4]], [v[3], v[1], v[5]], [v[4], v[5], v[2]]])
    if np.trace(a) < 0:
        v, a = -v, -a
    if np.any(np.linalg.eigvalsh(a) <= 0):
        raise IllPosedError("quadric fit is not an ellipsoid (matrix not positive definite)")
    center = -np.linalg.solve(a, v[6:9])
    k = center @ a @ center - v[9]
    if k <= 0:
        raise IllPosedError("degenerate quadric fit")
    return mu + s * center, a / (k * s * s)


def _fit_sphere(x):
    design = np.column_stack([2.0 * x, np.ones(len(x))])
    coef, _, _, _ = np.linalg.lstsq(design, np.sum(x * x, axis=1), rcond=None)
    center = coef[:3]
    radius = np.sqrt(coef[3] + center @ center)
    return center, radius


def spin_calibration(readings, reference_tmi=None, offsets_only=False):
    """Constant-TMI calibration from readings taken while rotating.

    Fits an ellipsoid to the measured vectors and maps it onto a sphere of
    radius ``reference_tmi`` (or the mean measured magnitude). With
    ``offsets_only`` a sphere is fitted and only the center is removed.
    """
    x = readings.field if isinstance(readings, TimeSeries) else np.asarray(readings, dtype=float)
    x = x.reshape(-1, 3)
    if x.shape[0] < MIN_SPIN_POINTS:
        raise IllPosedError(f"spin calibration needs at least {MIN_SPIN_POINTS} readings, got {x.shape[0]}")
    gap, covered = angular_coverage(x)
    if gap >= MAX_SPIN_GAP_DEG:
        raise CoverageError(
            f"largest angular gap {gap:.1f} deg (limit {MAX_SPIN_GAP_DEG} deg), covered {covered:.2f} sr",
            max_gap_deg=gap,
            solid_angle_sr=covered,
        )
    raw_tmi = np.linalg.norm(x, axis=1)
    r_ref = float(raw_tmi.mean()) if reference_tmi is None else float(reference_tmi)

    if offsets_only:
        center, _ = _fit_sphere(x)
        matrix = np.eye(3)
    else:
        center, quad = _fit_quadric(x)
        w, v = np.linalg.eigh(quad)
        matrix = r_ref * (v * np.sqrt(w)) @ v.T
    offset = -matrix @ center
    corrected = np.linalg.norm(x @ matrix.T + offset, axis=1)
    report = {
        "n_points": x.shape[0],
        "max_gap_deg": gap,
        "reference_tmi": r_ref,
        "raw_tmi_std": float(raw_tmi.std()),
        "raw_tmi_spread": float(np.ptp(raw_tmi)),
        "tmi_std": float(corrected.std()),
        "tmi_max_dev": float(np.abs(corrected - r_ref).max()),
    }
    return CalibrationModel(matrix, offset, fit_report=report)


@dataclass
class AccuracyReport:
    mean: np.ndarray
    std: np.ndarray
    max_abs: np.ndarray
    n_points: int

    def format(self):
        rows = ["axis  mean_nT    std_nT    max_abs_nT"]
        for i, name in enumerate("XYZ"):
            rows.append(f"{name}     {self.mean[i]: .3f}   {self.std[i]:.3f}   {self.max_abs[i]:.3f}")
        return "\n".join(rows)


def evaluate_accuracy(model, measured, reference=None, temps=None):
    """Residual statistics of ``model`` on held-out (measured, reference) data."""
    if reference is None:
        measured, reference = _stack_pairs(measured)
    x = np.asarray(measured, dtype=float).reshape(-1, 3)
    y = np.asarray(reference, dtype=float).reshape(-1, 3)
    err = model.correct(x, temps) - y
    std = err.std(axis=0, ddof=1) if len(err) > 1 else np.zeros(3)
    return AccuracyReport(err.mean(axis=0), std, np.abs(err).max(axis=0), len(err))


__all__ = [
    "CalibrationModel",
    "CalTable",
    "TemperatureFit",
    "AccuracyReport",
    "inverse_of_imperfections",
    "apply_calibration",
    "fit_affine_calibration",
    "cal_table",
    "from_table",
    "fit_temperature_model",
    "spin_calibration",
    "evaluate_accuracy",
    "angular_coverage",
]
