"""Exception types raised across the package."""


class BlockCertError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(BlockCertError, ValueError):
    pass


class ZeroColumn(BlockCertError, ValueError):
    pass


class RankDeficient(BlockCertError, ValueError):
    pass


class Infeasible(BlockCertError):
    pass


class NotConverged(BlockCertError):
    """Iteration budget exhausted.

    ``result`` holds the best iterate found, which callers may still use.
    """

    def __init__(self, message, result=None, iterations=None, residuals=None):
        super().__init__(message)
        self.result = result
        self.iterations = iterations
        self.residuals = residuals


class InvalidQuery(BlockCertError, ValueError):
    pass


class BracketFailure(BlockCertError):
    pass


class MaxIterations(BlockCertError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NonPositiveOmega(BlockCertError, ValueError):
    pass


class InvalidK(BlockCertError, ValueError):
    pass


class TooLarge(BlockCertError, ValueError):
    pass


class KernelTooLarge(TooLarge):
    pass


class NoBracket(BlockCertError):
    pass
