"""Exception types shared across the package."""


class DsmGeomError(Exception):
    """Base class for all package errors."""


class DomainError(DsmGeomError):
    """A parameter point lies outside the declared chart domain."""


class MissingStatistic(DsmGeomError):
    """A data set cannot answer a statistic query the divergence needs."""


class NumericalFailure(DsmGeomError):
    """A numerical routine could not reach its accuracy target."""


class NoConvergence(DsmGeomError):
    """An iterative solver stopped without meeting its tolerance.

    ``reason`` is one of ``"max_iter"``, ``"SaddleOrMax"``, ``"stalled"``.
    """

    def __init__(self, message, reason="max_iter", result=None):
        super().__init__(message)
        self.reason = reason
        self.result = result


class Unsupported(DsmGeomError):
    """The model does not provide the requested optional capability."""


class Condition4Violated(DsmGeomError):
    """Fibre members disagree on the divergence Hessian beyond tolerance.

    Carries the evidence so callers can report the failure as data.
    """

    def __init__(self, message, deviation, member_hessians, member_labels):
        super().__init__(message)
        self.deviation = deviation
        self.member_hessians = member_hessians
        self.member_labels = member_labels


class HessianStructureViolated(DsmGeomError):
    """Two independent probe families yield different connections."""

    def __init__(self, message, deviation, family_estimates):
        super().__init__(message)
        self.deviation = deviation
        self.family_estimates = family_estimates


class ProbeSingular(DsmGeomError):
    """The off-fibre probe matrix is numerically singular."""


class MetricNotPD(DsmGeomError):
    """The evaluated metric is not positive definite."""


class NotFlat(DsmGeomError):
    """Path dependence detected where a flat connection was required."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class NotIntegrable(DsmGeomError):
    """The Mayer-Lie system failed its two-path integrability check."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual
