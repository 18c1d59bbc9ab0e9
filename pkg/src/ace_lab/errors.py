"""Exception types shared across the package."""


class AceError(Exception):
    """Base class for all ace-lab errors."""


class DimensionMismatch(AceError):
    """Operands have incompatible dimensions or ranks."""


class DegenerateGap(AceError):
    """A spectral gap required for a well-defined density matrix is absent."""


class RankOutOfRange(AceError):
    """A requested rank is outside the valid range."""


class ShiftInsufficient(AceError):
    """The shifted operator B - t*I is not negative definite; raise t."""


class NotTangent(AceError):
    """A perturbation is not tangent to the projector manifold."""


class NotFixed(AceError):
    """A frame is not a fixed point of the iteration map to the required tolerance."""


class InsufficientTrace(AceError):
    """Too few qualifying trace points for a rate fit."""


class EnumerationCapExceeded(AceError):
    """binom(N, n) exceeds the fixed-point enumeration cap."""


class AssumptionViolated(AceError):
    """A genericity assumption (distinct eigenvalues, clean margins) fails."""


class UnknownName(AceError):
    """An unknown named object was requested."""


class InvalidParameter(AceError):
    """A parameter is outside its documented domain."""
