"""Exception types shared across the package."""


class GanLabError(Exception):
    """Base class for all errors raised by ganlab."""


class InvalidInputError(GanLabError, ValueError):
    pass


class InvalidRegionError(InvalidInputError):
    pass


class UnsupportedLossError(InvalidInputError):
    pass


class ConfigurationError(GanLabError, ValueError):
    pass


class NoDifferentiableEquilibriumError(GanLabError):
    pass


class NoStableStepError(GanLabError):
    pass


class NumericFailureError(GanLabError, ArithmeticError):
    pass


class InsufficientDataError(GanLabError):
    pass


class TooLargeError(InvalidInputError):
    pass


class DivergenceError(GanLabError, FloatingPointError):
    """Raised when an iteration leaves the finite region.

    ``trajectory`` holds the finite prefix computed before the blow-up.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
