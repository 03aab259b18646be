"""Exception types shared across the package."""


class SlbError(Exception):
    """Base class for all package errors."""


class DomainError(SlbError, ValueError):
    """A point or composed argument left the working domain."""


class QuadratureError(SlbError, ArithmeticError):
    """Adaptive quadrature did not meet its tolerance within the depth limit."""


class RootNotFoundError(SlbError, ArithmeticError):
    """A bracketing root search could not bracket or converge."""


class FlowExitError(DomainError):
    """The integrated state left the domain mid-flow."""

    def __init__(self, message: str, exit_time: float):
        super().__init__(message)
        self.exit_time = exit_time


class BoundInversionError(RootNotFoundError):
    """Inverting the interaction-time relation failed for one sampling bound."""

    def __init__(self, message: str, bound: str):
        super().__init__(message)
        self.bound = bound


class GraphError(SlbError, ValueError):
    """Malformed causal graph: cycles, unknown nodes, duplicate ids."""


class PlanError(SlbError, ValueError):
    """A self-labeling plan cannot be built for the requested pair."""


class ZeroVarianceError(SlbError, ValueError):
    """R^2 is undefined because the targets have zero variance.

    The mean absolute error is still available on ``mae``.
    """

    def __init__(self, mae: float):
        super().__init__("targets have zero variance; r2 is undefined")
        self.mae = mae


class QuotaError(SlbError, RuntimeError):
    """Class quotas could not be met within the episode budget."""

    def __init__(self, message: str, shortfall: dict):
        super().__init__(message)
        self.shortfall = shortfall
