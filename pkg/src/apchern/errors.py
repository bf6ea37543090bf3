"""Exception and warning types raised across the package."""


class ApcError(Exception):
    """Base class for all package errors."""


class InvalidParameter(ApcError, ValueError):
    pass


class AttemptsExhausted(ApcError, RuntimeError):
    """The hard-disk sampler could not place every point."""


class PatternMismatch(ApcError, ValueError):
    pass


class NotALatticePoint(ApcError, ValueError):
    pass


class RangeTooLarge(ApcError, ValueError):
    pass


class FluxNotQuantized(ApcError, ValueError):
    pass


class OddSiteCount(ApcError, ValueError):
    pass


class NotHermitian(ApcError, ValueError):
    pass


class ConvergenceFailure(ApcError, RuntimeError):
    pass


class DimensionMismatch(ApcError, ValueError):
    pass


class NotChiral(ApcError, ValueError):
    pass


class GaplessAtZero(ApcError, ValueError):
    pass


class SingularLocalizer(ApcError, ValueError):
    pass


class KappaOutOfRange(ApcError, ValueError):
    pass


class FitFailure(ApcError, RuntimeError):
    pass


class ConfigInvalid(ApcError, ValueError):
    pass


class FluxNotQuantizedWarning(UserWarning):
    pass


class EFOnEigenvalueWarning(UserWarning):
    pass


class RelativeDensityWarning(UserWarning):
    pass
