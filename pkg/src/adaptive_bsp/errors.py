"""Exceptions raised across the package."""


class PlanningError(Exception):
    """Base class for every error raised by this package."""


class AllWeightsZero(PlanningError):
    pass


class ZeroLikelihoodObservation(PlanningError):
    pass


class UnboundedDensity(PlanningError):
    pass


class NonpositiveLikelihood(PlanningError):
    pass


class AlreadyAtMaxLevel(PlanningError):
    pass


class NonPSDCovariance(PlanningError):
    pass


class DegenerateBandwidth(PlanningError):
    pass


class ConsistencyViolation(PlanningError):
    """Two planners that must agree produced different results.

    ``diff`` describes the first divergence found.
    """

    def __init__(self, message: str, diff: dict | None = None):
        super().__init__(message)
        self.diff = diff or {}
