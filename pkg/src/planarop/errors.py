"""Exception hierarchy shared by all modules."""


class PlanarOpError(Exception):
    """Base class for library errors."""


class UsageError(PlanarOpError):
    """Caller passed incompatible or malformed arguments."""


class DomainError(PlanarOpError):
    """A mathematical precondition failed (e.g. non-vanishing diagonal)."""


class ConvergenceError(PlanarOpError):
    """A series composition or Newton solve did not converge."""


class GeometryError(PlanarOpError):
    """Droplet validation failed."""


class NumericalError(PlanarOpError):
    """An internal assertion on a numerical invariant failed."""


class IterationError(NumericalError):
    """The fixed-point iteration diverged."""


class PrecisionError(NumericalError):
    """Extended-precision budget exhausted (e.g. Cholesky breakdown)."""


class ConfigError(PlanarOpError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
