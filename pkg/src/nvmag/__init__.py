"""Simulation and signal processing for NV-diamond vector magnetometers."""

from .analysis import allan_deviation, compute_tmi, diurnal_correct, grid_tmi_map, heading_error, sensitivity_at
from .calibration import (
    CalibrationModel,
    CalTable,
    apply_calibration,
    cal_table,
    evaluate_accuracy,
    fit_affine_calibration,
    fit_temperature_model,
    from_table,
    spin_calibration,
)
from .config import RunConfig
from .inversion import invert_frame, projections_to_field, splittings_to_projections, common_mode_to_temperature
from .nv_physics import (
    BiasFieldConfig,
    ImperfectionModel,
    LineParams,
    NvConstants,
    SensorGeometry,
    apply_imperfections,
    forward_resonances,
    synthesize_spectrum,
    tetrahedral_axes,
    zero_field_splitting,
)
from .spectral import PeakTracker, detect_peaks, fit_lorentzians, pair_peaks, track_peaks
from .types import FieldVector, MagReading, OdmrSpectrum, PeakSet, TimeSeries

__version__ = "0.1.0"
