"""Exception types shared across the simulator."""


class FsoLinkError(Exception):
    """Base class for all fsolink errors."""


class ConfigError(FsoLinkError):
    """Invalid or inconsistent configuration (bad value, unknown key, empty profile)."""


class DegenerateReadingError(FsoLinkError):
    """PSD sum voltage is zero or negative; the controller treats this as beam lost."""


class PhaseMatchError(FsoLinkError):
    """No phase-matched wavelength pair exists in the search bracket."""


class FitError(FsoLinkError):
    """Nonlinear fit failed to converge; carries residual diagnostics."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm
