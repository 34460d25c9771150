"""Exception types raised across the package."""


class ReplicationError(Exception):
    """Base class for model errors (exit code 1 on the command line)."""


class MgfDiverges(ReplicationError, ArithmeticError):
    """The moment generating function is infinite at the requested argument.

    Heavy-tailed laws (Pareto) have no finite MGF for positive arguments; fit a
    hyperexponential with :func:`replibound.dist.fit_hyperexp_to_pareto` first.
    """


class DivergentMean(ReplicationError, ArithmeticError):
    pass


class AllUnstable(ReplicationError):
    pass


class UnstableBound(ReplicationError):
    """A tail bound was requested from an unstable configuration."""


class Unstable(ReplicationError):
    pass


class FitFailed(ReplicationError):
    pass


class DomainError(ReplicationError, ValueError):
    pass


class WrongVariant(ReplicationError, TypeError):
    pass


class EmptySample(ReplicationError, ValueError):
    pass
