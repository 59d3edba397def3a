"""Exception hierarchy for the estimation toolkit."""


class CefisError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(CefisError, ValueError):
    pass


class DegenerateCovariance(CefisError):
    """Covariance could not be factorized even after jitter."""


class AllWeightsZero(CefisError):
    pass


class InvalidLsfValue(CefisError, ValueError):
    """NaN or infinite limit-state value or gradient."""


class InvalidSmoothing(CefisError, ValueError):
    pass


class EigenFailure(CefisError):
    pass


class MissingGradient(CefisError):
    pass


class SolveFailure(CefisError):
    pass


class ConfigError(CefisError):
    pass
