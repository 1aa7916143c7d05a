"""Exception hierarchy shared by every shinzettl module."""


class ShinZettlError(Exception):
    """Base class for all errors raised by the package."""


class ValidationError(ShinZettlError, ValueError):
    """Malformed input: shapes, breakpoints, config fields, flags."""


class ConfigError(ValidationError):
    """Experiment or potential config that cannot be loaded."""


class AdjointMismatchError(ValidationError):
    """A bracket or pairing was requested for something other than an (l, l+) pair."""


class SymmetryClassError(ValidationError):
    """Operation needs a symmetry class the potential does not have."""


class NumericalError(ShinZettlError):
    """A numerical procedure could not deliver the requested accuracy."""


class BlowUpError(NumericalError):
    def __init__(self, message, last_x, direction=None):
        super().__init__(message)
        self.last_x = last_x
        self.direction = direction


class ToleranceError(NumericalError):
    """Step size underflow or step-count budget exhausted."""


class QuadratureError(NumericalError):
    """Adaptive quadrature failed after the refinement budget."""


class LinearSolveError(NumericalError):
    """Singular system in an implicit time step."""
