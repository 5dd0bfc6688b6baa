"""Frame-by-frame processing: spectrum -> tracked peaks -> field reading."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .config import RunConfig
from .errors import NvmagError
from .inversion import invert_frame
from .nv_physics import forward_resonances
from .spectral import PeakTracker

log = logging.getLogger(__name__)


@dataclass
class FrameResult:
    frame_id: int
    timestamp: float
    reading: object = None
    error: str | None = None
    relocked: bool = False

    @property
    def valid(self):
        return self.reading is not None


def predicted_peaks(config):
    """Line positions expected at the bias plus the configured ambient guess."""
    total = config.bias.vector() + config.expected_field
    return forward_resonances(total, config.constants.T0, config.geometry, config.constants, config.validity_nT)


def process_frames(frames, config=None):
    """Generate one :class:`FrameResult` per input frame, in order.

    ``frames`` yields objects with ``frame_id``, ``timestamp``, ``spectrum``
    and ``error`` (see :func:`nvmag.io.iter_spectra`). A tracking loss
    triggers one re-detection; if that fails too the frame is invalid and the
    tracker starts over on the next frame.
    """
    config = config or RunConfig()
    tracker = PeakTracker(
        predicted_peaks(config),
        window=config.track_window_fwhm * config.linewidth_Hz,
        fwhm=config.linewidth_Hz,
    )
    for frame in frames:
        if frame.error is not None:
            log.warning("frame %s corrupt: %s", frame.frame_id, frame.error)
            yield FrameResult(frame.frame_id, frame.timestamp, error=frame.error)
            continue
        losses = tracker.losses
        try:
            peaks = tracker.update(frame.spectrum)
            reading = invert_frame(
                peaks, config.constants, config.geometry, config.bias, frame.timestamp
            )
        except NvmagError as exc:
            tracker.reset()
            log.warning("frame %s: %s", frame.frame_id, exc)
            yield FrameResult(frame.frame_id, frame.timestamp, error=str(exc))
            continue
        relocked = tracker.losses > losses
        if relocked:
            log.info("frame %s: tracking lost, re-detected", frame.frame_id)
        yield FrameResult(frame.frame_id, frame.timestamp, reading, relocked=relocked)
