"""Exception types raised across the planning stack."""


class PlanningError(Exception):
    """Base class for every error raised by riskplan."""


# reference path
class TooFewWaypoints(PlanningError):
    pass


class DegenerateWaypoints(PlanningError):
    pass


class OutOfRange(PlanningError):
    pass


class OffsetExceedsRadius(PlanningError):
    pass


class ProjectionDiverged(PlanningError):
    pass


class PointTooFar(PlanningError):
    pass


# prediction / hazard / ST graph
class NegativeTime(PlanningError):
    pass


class InvalidHorizon(PlanningError):
    pass


class TauOutOfHorizon(PlanningError):
    pass


class EmptyRange(PlanningError):
    pass


class NoFeasibleCorridor(PlanningError):
    pass


# sampling / selection
class IllConditioned(PlanningError):
    pass


class AllInfeasible(PlanningError):
    pass


# vehicle / QP / MPC
class SteeringSingular(PlanningError):
    pass


class BadProblem(PlanningError):
    pass


class HorizonMismatch(PlanningError):
    pass


class CorridorGap(PlanningError):
    pass


class QpInfeasible(PlanningError):
    def __init__(self, message: str, family: str | None = None):
        super().__init__(message)
        self.family = family


# pipeline / scenarios
class NoFeasiblePlan(PlanningError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnknownScenario(PlanningError):
    pass


class InvalidScenarioFile(PlanningError):
    pass


class ManeuverNotCompleted(PlanningError):
    pass


class UnknownMethod(PlanningError):
    pass
