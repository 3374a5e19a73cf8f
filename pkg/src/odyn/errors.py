"""Exception hierarchy shared across the package."""


class OdynError(Exception):
    """Base class for all package errors."""


class ConfigError(OdynError, ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class UnsupportedStrategyError(OdynError, ValueError):
    """Evaluation strategy not available for the requested quantity."""


class TeacherRankError(OdynError):
    """Teacher weights stayed rank deficient after the retry budget."""


class SingularTeacherError(OdynError, ValueError):
    """Teacher Gram matrix P is not invertible."""


class NullOrthogonalSpaceError(OdynError, ValueError):
    """d <= k: there is no space orthogonal to the teacher span."""


class NumericalAbort(OdynError):
    """A run had to be stopped (CLI exit code 3)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class DivergenceError(NumericalAbort):
    """Non-finite weights or overlaps were produced."""


class PSDViolation(NumericalAbort):
    """The overlap matrix left the PSD cone beyond tolerance."""


class BoundednessViolation(NumericalAbort):
    """max_i Q_ii exceeded the configured bound K."""
