"""Exception hierarchy for rcreml."""


class RcremlError(Exception):
    """Base class for all rcreml errors."""


class DimensionMismatch(RcremlError):
    """Block matrices within or across individuals have inconsistent shapes."""


class ContainmentViolation(RcremlError):
    """Some Z_k leaves the column space of X_k beyond tolerance."""


class RankDeficientDesign(RcremlError):
    """The pooled fixed-effect design has rank below p."""


class NotSymmetric(RcremlError):
    """A matrix expected to be symmetric is not, beyond tolerance."""


class DegenerateIndividual(RcremlError):
    """An individual has too few observations for a residual variance estimate."""


class SingularInformation(RcremlError):
    """An information matrix is numerically singular."""


class NonPositiveDeterminant(RcremlError):
    """A determinant that must be positive is zero or negative."""


class NonPositiveDefiniteSigma(RcremlError):
    """A per-individual covariance matrix is not positive definite."""


class InvalidConfig(RcremlError):
    """A configuration object violates its invariants."""
