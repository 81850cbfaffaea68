"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes): validation
problems raised before any numerics run, and numerical failures raised
while they run.
"""


class KFPError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(KFPError, ValueError):
    """Inputs violate a precondition."""


class NumericalError(KFPError, ArithmeticError):
    """A numerical procedure failed or produced an invalid state."""


class DimensionMismatchError(ValidationError):
    pass


class InvalidScaleError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class StabilityError(ConfigurationError):
    def __init__(self, message, max_dt=None):
        super().__init__(message)
        self.max_dt = max_dt


class DomainError(ValidationError):
    pass


class TimeDirectionError(ValidationError):
    pass


class IntervalError(ValidationError):
    pass


class StatisticsError(ValidationError):
    pass


class MisuseError(ValidationError):
    pass


class ValidityError(ValidationError):
    pass


class AttainabilityError(ValidationError):
    pass


class CurveEscapeError(ValidationError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ChainConstructionError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DivergenceError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class MaximumPrincipleError(NumericalError):
    pass
