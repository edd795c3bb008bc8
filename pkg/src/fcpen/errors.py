"""Exception types shared across the package."""


class FcpenError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(FcpenError, ValueError):
    """Invalid specification, configuration or input container."""


class DomainError(FcpenError, ValueError):
    """Numeric argument outside the mathematical domain of an operation."""


class UnsupportedOperationError(FcpenError, TypeError):
    """Operation not defined for this problem kind."""


class InsufficientDataError(FcpenError, ValueError):
    """Too few observations for the requested computation."""


class SingularityError(FcpenError, ValueError):
    """Rank-deficient system where a unique solution was required."""


class ConvergenceError(FcpenError, RuntimeError):
    """Iteration budget exhausted before reaching the requested tolerance.

    Carries the last iterate and the residual at the point of failure so
    callers can inspect or salvage partial results.
    """

    def __init__(self, message, iterate=None, residual=None, iterations=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.iterations = iterations
