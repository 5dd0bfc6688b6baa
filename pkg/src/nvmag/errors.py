"""Exception hierarchy shared by all nvmag modules."""


class NvmagError(Exception):
    """Base class for every error raised by nvmag."""


class ValidationError(NvmagError, ValueError):
    """Invalid input, configuration or file content (CLI exit code 2)."""


class DomainError(ValidationError):
    """A physical quantity lies outside the range the model supports."""


class ModelRangeError(ValidationError):
    """Field projection exceeds the first-order model validity threshold."""


class ConfigurationError(ValidationError):
    """Inconsistent configuration, e.g. a frequency grid that is too coarse."""


class NumericalError(NvmagError, ArithmeticError):
    """A numerical procedure failed (CLI exit code 4)."""


class DetectionError(NumericalError):
    """Fewer prominent minima than expected were found in a spectrum."""

    def __init__(self, found, expected):
        super().__init__(f"found {found} prominent minima, expected {expected}")
        self.found = found
        self.expected = expected


class FitError(NumericalError):
    """Non-convergence of the Lorentzian fit; carries the last iterate."""

    def __init__(self, message, params=None, residual_rms=None):
        super().__init__(message)
        self.params = params
        self.residual_rms = residual_rms


class DegeneracyError(NumericalError):
    """Two peak centers merged (gap below a tenth of the linewidth)."""


class TrackingLossError(NumericalError):
    """A tracked peak left its search window."""

    def __init__(self, message, axis=None, peak_index=None):
        super().__init__(message)
        self.axis = axis
        self.peak_index = peak_index


class PairingError(NumericalError):
    """Measured peaks cannot be assigned to predicted peaks unambiguously."""


class IllPosedError(NumericalError):
    """Calibration design matrix is rank deficient or the data are too few."""


class CoverageError(IllPosedError):
    """Spin-calibration readings do not cover enough of the unit sphere."""

    def __init__(self, message, max_gap_deg=None, solid_angle_sr=None):
        super().__init__(message)
        self.max_gap_deg = max_gap_deg
        self.solid_angle_sr = solid_angle_sr
