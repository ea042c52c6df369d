"""Exception hierarchy shared by all modules."""


class KscError(Exception):
    """Base class for every error raised by deepksc."""


class DimensionError(KscError, ValueError):
    """Array shapes are inconsistent with each other or with a model."""


class DomainError(KscError, ValueError):
    """Input contains values outside the admissible domain (NaN, Inf, ...)."""


class RankError(KscError, ArithmeticError):
    """A matrix that must have full column rank does not."""


class EmptyClusterError(KscError):
    """A cluster has no members and could not be repaired.

    Attributes
    ----------
    cluster : int
        Index of the offending cluster.
    """

    def __init__(self, cluster, message=None):
        self.cluster = cluster
        super().__init__(message or f"cluster {cluster} has no assigned points")


class FormatError(KscError, ValueError):
    """A binary file does not follow the expected layout."""
