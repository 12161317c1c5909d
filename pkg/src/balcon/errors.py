"""Exception types shared across the package."""


class BalconError(Exception):
    """Base class for every error raised by balcon."""


class ZeroVectorError(BalconError, ValueError):
    pass


class InvalidSpecError(BalconError, ValueError):
    pass


class BatchTooLargeError(BalconError, ValueError):
    pass


class NoPositiveError(BalconError, ValueError):
    """Anchor has no same-class partner in the batch."""


class UndefinedBoundError(BalconError, ValueError):
    pass


class InvalidKError(BalconError, ValueError):
    pass


class DimensionTooSmallError(BalconError, ValueError):
    pass


class EmptyClassError(BalconError, ValueError):
    pass


class NonFiniteError(BalconError, ArithmeticError):
    pass


class DivergedError(BalconError, ArithmeticError):
    """Training produced a non-finite or exploding loss.

    ``trace`` holds everything recorded up to the last good state.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(BalconError, ValueError):
    pass
