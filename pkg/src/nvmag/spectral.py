"""Peak extraction from ODMR spectra.

Detection bootstraps a set of center guesses; a damped Gauss-Newton
(Levenberg-Marquardt) fit refines centers, widths and depths of all lines
together with one shared baseline; the tracker re-fits each frame inside
windows around the previous centers; pairing assigns lines to NV axes using
the positions predicted from the bias field.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .errors import DegeneracyError, DetectionError, FitError, PairingError, TrackingLossError
from .errors import ValidationError
from .types import OdmrSpectrum, PeakSet

SMOOTH_WINDOW = 5
PROMINENCE_FRACTION = 0.25
DEFAULT_FWHM = 1.0e6
MAX_ITER = 200
REL_TOL = 1e-10
TRACK_WINDOW_FWHM = 5.0
MIN_CONTRAST_RATIO = 0.25


def detect_peaks(spectrum, expected, window=SMOOTH_WINDOW, prominence_fraction=PROMINENCE_FRACTION):
    """Return ``expected`` center guesses (Hz), ascending.

    The contrast is smoothed with a moving average of ``window`` samples; a dip
    counts when its prominence exceeds ``prominence_fraction`` of the depth of
    the deepest dip below the median level. The most prominent dips win.
    """
    if expected < 1:
        raise ValidationError("expected must be at least 1")
    smoothed = uniform_filter1d(spectrum.contrast, size=window, mode="nearest")
    deepest = np.median(smoothed) - smoothed.min()
    if not deepest > 0:
        raise DetectionError(0, expected)
    idx, props = find_peaks(-smoothed, prominence=prominence_fraction * deepest)
    if idx.size < expected:
        raise DetectionError(int(idx.size), expected)
    keep = idx[np.argsort(props["prominences"])[::-1][:expected]]
    return np.sort(spectrum.freqs[keep])


def _model(params, freqs, ref, w0):
    """Model values and analytic Jacobian for the scaled parameter vector.

    Per peak: center offset from ``ref`` in units of ``w0``, log width ratio,
    depth. The last entry is the shared baseline.
    """
    k = ref.size
    u, lw, a = params[:k], params[k : 2 * k], params[2 * k : 3 * k]
    baseline = params[-1]
    centers = ref + w0 * u
    widths = w0 * np.exp(lw)
    x = 2.0 * (freqs[:, None] - centers[None, :]) / widths[None, :]
    lor = 1.0 / (1.0 + x * x)
    y = baseline - lor @ a
    lor2 = lor * lor
    jac = np.empty((freqs.size, 3 * k + 1))
    jac[:, :k] = -4.0 * a * x * lor2 * (w0 / widths)
    jac[:, k : 2 * k] = -2.0 * a * x * x * lor2
    jac[:, 2 * k : 3 * k] = -lor
    jac[:, -1] = 1.0
    return y, jac


def _levenberg_marquardt(params, freqs, data, ref, w0, max_iter=MAX_ITER, tol=REL_TOL):
    y, jac = _model(params, freqs, ref, w0)
    r = y - data
    cost = r @ r
    lam = 1e-3
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = params + step
                y_new, jac_new = _model(trial, freqs, ref, w0)
                r_new = y_new - data
                cost_new = r_new @ r_new
                if np.isfinite(cost_new) and cost_new <= cost:
                    break
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left at machine precision
                return params, jac, r, it
        small = np.linalg.norm(step) <= tol * (np.linalg.norm(params) + tol)
        params, jac, r, cost = trial, jac_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-15)
        if small or cost == 0.0:
            return params, jac, r, it
    raise FitError(
        f"no convergence after {max_iter} iterations",
        params=params,
        residual_rms=float(np.sqrt(cost / r.size)),
    )


def _check_gaps(centers, fwhm, what):
    c = np.sort(np.asarray(centers, dtype=float))
    gaps = np.diff(c)
    if gaps.size and gaps.min() < fwhm / 10.0:
        i = int(np.argmin(gaps))
        raise DegeneracyError(
            f"{what} at {c[i]:.6f} and {c[i + 1]:.6f} Hz are closer than fwhm/10 = {fwhm / 10:.6g} Hz"
        )


def fit_lorentzians(spectrum, guesses, fwhm=None, initial=None):
    """Least-squares fit of a sum of Lorentzian dips with a shared baseline.

    Parameters
    ----------
    spectrum : OdmrSpectrum
    guesses : array_like
        One center guess (Hz) per line.
    fwhm : float, optional
        Starting linewidth; defaults to the widths of ``initial`` or 1 MHz.
    initial : PeakSet, optional
        Previous fit used as the starting point (widths, depths, baseline).
        Its pairing, if any, is carried over to the result.

    Returns
    -------
    PeakSet
        Centers sorted ascending with 1-sigma uncertainties scaled by the
        residual RMS; ``fit_quality`` is the residual RMS.
    """
    ref = np.asarray(guesses, dtype=float).reshape(-1)
    k = ref.size
    if k == 0:
        raise ValidationError("need at least one guess")
    if ref.min() < spectrum.freqs[0] or ref.max() > spectrum.freqs[-1]:
        raise ValidationError("guesses must lie on the frequency grid")
    if initial is not None and initial.widths is not None:
        widths0 = np.asarray(initial.widths, dtype=float)
    else:
        widths0 = np.full(k, fwhm or DEFAULT_FWHM)
    w0 = float(np.median(widths0))
    _check_gaps(ref, w0, "guesses")

    freqs, data = spectrum.freqs, spectrum.contrast
    if initial is not None and initial.baseline is not None:
        baseline0 = float(initial.baseline)
        depth0 = np.asarray(initial.contrasts, dtype=float)
    else:
        baseline0 = float(np.median(data))
        nearest = np.clip(np.searchsorted(freqs, ref), 0, freqs.size - 1)
        depth0 = np.maximum(baseline0 - data[nearest], 1e-3 * max(abs(baseline0), 1e-12))
    params = np.concatenate([np.zeros(k), np.log(widths0 / w0), depth0, [baseline0]])

    try:
        params, jac, r, _ = _levenberg_marquardt(params, freqs, data, ref, w0)
    except FitError as exc:
        last = exc.params
        exc.params = {
            "centers": ref + w0 * last[:k],
            "widths": w0 * np.exp(last[k : 2 * k]),
            "contrasts": last[2 * k : 3 * k],
            "baseline": float(last[-1]),
        }
        raise

    centers = ref + w0 * params[:k]
    widths = w0 * np.exp(params[k : 2 * k])
    depths = params[2 * k : 3 * k]
    n, p = r.size, params.size
    ssr = float(r @ r)
    dof_var = ssr / (n - p) if n > p else 0.0
    try:
        cov = np.linalg.inv(jac.T @ jac) * dof_var
        sig = w0 * np.sqrt(np.clip(np.diag(cov)[:k], 0.0, None))
    except np.linalg.LinAlgError:
        sig = np.full(k, np.inf)
    _check_gaps(centers, float(np.median(widths)), "fitted centers")

    order = np.argsort(centers, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(k)
    pairing = {}
    if initial is not None and initial.pairing:
        # lower/upper follow frequency order after the sort
        pairing = {a: tuple(sorted((int(rank[lo]), int(rank[hi])))) for a, (lo, hi) in initial.pairing.items()}
    return PeakSet(
        centers[order],
        sig[order],
        pairing,
        float(np.sqrt(ssr / n)),
        widths[order],
        depths[order],
        float(params[-1]),
    )


def track_window_mask(freqs, centers, window):
    freqs = np.asarray(freqs)
    mask = np.zeros(freqs.size, dtype=bool)
    for c in centers:
        mask |= np.abs(freqs - c) <= window
    return mask


def window_guesses(centers, spectrum, window, prominence_fraction=PROMINENCE_FRACTION):
    """Starting centers for a windowed re-fit.

    Each previous center moves to the nearest smoothed dip when that dip lies
    inside its window and no other center is closer to it; otherwise it stays
    put. Also returns the indices of centers with no dip inside their window.
    """
    centers = np.asarray(centers, dtype=float)
    smoothed = uniform_filter1d(spectrum.contrast, size=SMOOTH_WINDOW, mode="nearest")
    deepest = np.median(smoothed) - smoothed.min()
    if not deepest > 0:
        return centers.copy(), np.arange(centers.size)
    idx, _ = find_peaks(-smoothed, prominence=prominence_fraction * deepest)
    dips = spectrum.freqs[idx]
    if dips.size == 0:
        return centers.copy(), np.arange(centers.size)
    dist = np.abs(centers[:, None] - dips[None, :])
    nearest_dip = np.argmin(dist, axis=1)
    nearest_center = np.argmin(dist, axis=0)
    guesses = centers.copy()
    for i, j in enumerate(nearest_dip):
        if nearest_center[j] == i and dist[i, j] <= window:
            guesses[i] = dips[j]
    empty = np.flatnonzero(dist.min(axis=1) > window)
    return guesses, empty


def _loss(previous, i, reason):
    axis = previous.axis_of(int(i))
    return TrackingLossError(f"peak {int(i)} (axis {axis}) {reason}", axis=axis, peak_index=int(i))


def track_peaks(previous, spectrum, window=None):
    """Re-fit every line inside a window around its previous center.

    Equivalent to :func:`fit_lorentzians` on the windowed samples, started
    from ``previous`` with centers moved by :func:`window_guesses`. Raises
    :class:`TrackingLossError` naming the axis when a line moves out of its
    window or fades below a quarter of its depth.
    """
    width = float(np.median(previous.widths)) if previous.widths is not None else DEFAULT_FWHM
    window = TRACK_WINDOW_FWHM * width if window is None else window
    mask = track_window_mask(spectrum.freqs, previous.centers, window)
    if mask.sum() < 2:
        raise TrackingLossError("no spectrum samples inside the tracking windows")
    sub = spectrum.subset(mask)
    guesses, empty = window_guesses(previous.centers, sub, window)
    try:
        result = fit_lorentzians(sub, guesses, initial=previous)
    except (FitError, DegeneracyError) as exc:
        if empty.size:
            raise _loss(previous, empty[0], f"has no dip inside its {window:.6g} Hz window") from exc
        raise TrackingLossError(f"re-fit failed: {exc}") from exc

    # peaks keep their identity through the ascending sort only if no lines crossed
    moved = np.abs(result.centers - previous.centers)
    lost = np.flatnonzero(moved > window)
    if previous.contrasts is not None and result.contrasts is not None:
        faded = result.contrasts < MIN_CONTRAST_RATIO * np.asarray(previous.contrasts)
        lost = np.union1d(lost, np.flatnonzero(faded))
    if lost.size:
        raise _loss(previous, lost[0], f"left its {window:.6g} Hz window")
    return result


class PeakTracker:
    """Per-stream tracker state; one instance per spectrum stream."""

    def __init__(self, predicted=None, expected=8, window=None, fwhm=None):
        self.predicted = predicted
        self.expected = expected
        self.window = window
        self.fwhm = fwhm
        self.previous = None
        self.losses = 0

    def acquire(self, spectrum):
        guesses = detect_peaks(spectrum, self.expected)
        peaks = fit_lorentzians(spectrum, guesses, fwhm=self.fwhm)
        if self.predicted is not None:
            # the common-mode shift is temperature; remove it before matching
            shift = peaks.centers.mean() - self.predicted.centers.mean()
            peaks = pair_peaks(peaks, replace(self.predicted, centers=self.predicted.centers + shift))
        self.previous = peaks
        return peaks

    def update(self, spectrum):
        """Track the next frame, re-acquiring once after a tracking loss."""
        if self.previous is None:
            return self.acquire(spectrum)
        try:
            self.previous = track_peaks(self.previous, spectrum, self.window)
        except TrackingLossError:
            self.losses += 1
            self.previous = None
            return self.acquire(spectrum)
        return self.previous

    def reset(self):
        self.previous = None


def pair_peaks(peaks, predicted, tolerance=None):
    """Assign measured lines to axes via the nearest predicted line.

    ``tolerance`` (Hz) is the smallest margin by which the nearest predicted
    line must beat the runner-up; it defaults to three times the largest
    measured sigma.
    """
    if not predicted.pairing:
        raise ValidationError("predicted PeakSet must carry a pairing")
    order = np.argsort(peaks.centers, kind="stable")
    measured = peaks.centers[order]
    sigmas = peaks.sigmas[order]
    pred = predicted.centers
    if measured.size != pred.size:
        raise PairingError(f"{measured.size} measured lines for {pred.size} predicted")
    if tolerance is None:
        finite = sigmas[np.isfinite(sigmas)]
        tolerance = 3.0 * float(finite.max()) if finite.size else 0.0
    dist = np.abs(measured[:, None] - pred[None, :])
    nearest = np.argmin(dist, axis=1)
    if pred.size > 1:
        two = np.sort(dist, axis=1)[:, :2]
        ambiguous = np.flatnonzero(two[:, 1] - two[:, 0] <= tolerance)
        if ambiguous.size:
            i = int(ambiguous[0])
            raise PairingError(f"measured line at {measured[i]:.6f} Hz is equidistant to two predictions")
    if np.unique(nearest).size != nearest.size:
        raise PairingError("two measured lines share one predicted line")
    owner = np.empty_like(nearest)
    owner[nearest] = np.arange(nearest.size)
    pairing = {}
    for axis, (lo, hi) in predicted.pairing.items():
        a, b = int(owner[lo]), int(owner[hi])
        pairing[axis] = (a, b) if measured[a] <= measured[b] else (b, a)
    return PeakSet(
        measured,
        sigmas,
        pairing,
        peaks.fit_quality,
        None if peaks.widths is None else peaks.widths[order],
        None if peaks.contrasts is None else peaks.contrasts[order],
        peaks.baseline,
    )


__all__ = [
    "OdmrSpectrum",
    "PeakSet",
    "detect_peaks",
    "fit_lorentzians",
    "track_peaks",
    "track_window_mask",
    "window_guesses",
    "PeakTracker",
    "pair_peaks",
]
