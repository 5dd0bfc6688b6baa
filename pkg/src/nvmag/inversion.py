"""Convert paired resonance lines into a vector field and a diamond temperature."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ModelRangeError, NvmagError
from .nv_physics import DEFAULT_VALIDITY_NT, TEMP_RANGE_K, BiasFieldConfig, NvConstants, tetrahedral_axes
from .types import FieldVector, MagReading

HIGH_SPREAD_FACTOR = 10.0
SPREAD_FLOOR_HZ = 1.0  # keeps rounding noise of exact predictions from tripping the flag


def splittings_to_projections(
    peaks, constants=None, bias=None, geometry=None, temperature=None, validity_threshold=DEFAULT_VALIDITY_NT
):
    """Signed field projection (nT) on each axis from its doublet splitting.

    The splitting only gives ``|B . n_i|``; the sign is that of the bias
    projection, which dominates any external field by construction.
    """
    constants = constants or NvConstants()
    bias = bias or BiasFieldConfig()
    peaks.require_pairing()
    lo, hi = peaks.pair_frequencies()
    magnitude = (hi - lo) / (2.0 * constants.gamma)
    if np.any(magnitude > validity_threshold):
        raise ModelRangeError(
            f"splitting implies |B.n| = {magnitude.max():.6g} nT above {validity_threshold:.6g} nT"
        )
    sign = np.where(bias.projections(geometry, temperature) < 0, -1.0, 1.0)
    return sign * magnitude


def projections_to_field(projections, geometry=None):
    """Least-squares field ``pinv(N) @ p`` and the misfit ``|N B - p|`` (nT)."""
    geometry = geometry or tetrahedral_axes()
    p = np.asarray(projections, dtype=float).reshape(-1)
    b = geometry.pinv() @ p
    residual = float(np.linalg.norm(geometry.axes @ b - p))
    return FieldVector.from_array(b), residual


def pair_midpoints(peaks):
    lo, hi = peaks.pair_frequencies()
    return 0.5 * (lo + hi)


def common_mode_to_temperature(peaks, constants=None):
    """Diamond temperature from the mean doublet midpoint."""
    constants = constants or NvConstants()
    peaks.require_pairing()
    mid = pair_midpoints(peaks).mean()
    temp = constants.T0 + (mid - constants.D0) / constants.beta
    if not TEMP_RANGE_K[0] <= temp <= TEMP_RANGE_K[1]:
        raise DomainError(f"implied temperature {temp:.3f} K outside {TEMP_RANGE_K}")
    return float(temp)


def midpoint_spread_flag(peaks):
    """True when the doublet midpoints disagree by more than 10 mean sigmas."""
    mids = pair_midpoints(peaks)
    limit = max(HIGH_SPREAD_FACTOR * float(peaks.sigmas.mean()), SPREAD_FLOOR_HZ)
    return bool(np.ptp(mids) > limit)


def invert_frame(peaks, constants=None, geometry=None, bias=None, timestamp=0.0, aux=None):
    """Full inversion of one frame into a :class:`MagReading`.

    The total field is inverted first and the temperature-adjusted bias is
    subtracted afterwards. Peak sigmas are propagated linearly through the
    pseudoinverse.
    """
    constants = constants or NvConstants()
    geometry = geometry or tetrahedral_axes()
    bias = bias or BiasFieldConfig()
    try:
        temp = common_mode_to_temperature(peaks, constants)
        proj = splittings_to_projections(peaks, constants, bias, geometry, temperature=temp)
        total, residual = projections_to_field(proj, geometry)
    except NvmagError as exc:
        exc.args = (f"frame at t={timestamp}: {exc}",) + exc.args[1:]
        raise

    external = total.as_array() - bias.vector(temp)
    s_lo, s_hi = peaks.pair_sigmas()
    proj_sigma = np.sqrt(s_lo**2 + s_hi**2) / (2.0 * constants.gamma)
    field_sigma = np.sqrt((geometry.pinv() ** 2) @ proj_sigma**2)

    aux = dict(aux or {})
    aux["midpoint_spread_high"] = midpoint_spread_flag(peaks)
    aux["fit_quality"] = peaks.fit_quality
    return MagReading(float(timestamp), FieldVector.from_array(external), temp, residual, field_sigma, aux)


__all__ = [
    "FieldVector",
    "MagReading",
    "splittings_to_projections",
    "projections_to_field",
    "common_mode_to_temperature",
    "invert_frame",
    "pair_midpoints",
]
