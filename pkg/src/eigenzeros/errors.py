"""Exception types raised across the package."""


class EigenzerosError(Exception):
    """Base class for all package errors."""


class ConfigError(EigenzerosError):
    pass


class NumericalFailure(EigenzerosError):
    """Raised when a computation cannot produce a trustworthy number."""


class EigenvalueCollision(ConfigError):
    """Another frequency orbit shares the eigenvalue; pass ``merge=True`` to take the full eigenspace."""


class ConstancyViolation(NumericalFailure):
    """Pullback spectrum varies over M beyond tolerance (basis is not invariant)."""


class NotIsotropyIrreducible(EigenzerosError):
    pass


class NonTransversal(NumericalFailure):
    pass


class DegenerateFrame(NumericalFailure):
    """Common zero set is positive dimensional for this frame."""


class NonConvergent(NumericalFailure):
    pass


class TooManyUncertified(NumericalFailure):
    pass


class CoveringDegree(EigenzerosError):
    """The evaluation map covers its image more than once."""


class Ambiguous(NumericalFailure):
    """A mesh vertex lies on the section plane."""
