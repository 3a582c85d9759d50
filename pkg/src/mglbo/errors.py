"""Exception types raised by the library."""


class MglboError(Exception):
    """Base class for all library errors."""


class FactorizationFailure(MglboError):
    """Kernel matrix stayed non positive definite after jitter escalation."""


class AllCandidatesFailed(MglboError):
    """Every length-scale candidate failed during cross-validation."""


class RankDeficient(MglboError):
    """Quadratic design matrix has numerical rank below the number of unknowns."""


class InvalidCorrelation(MglboError, ValueError):
    """Minimum correlation must lie strictly inside (0, 1)."""


class ObjectiveFailure(MglboError):
    """The objective raised; ``trace`` holds everything recorded before it."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
