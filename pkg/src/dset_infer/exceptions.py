"""Exception hierarchy shared across the package."""


class DsetError(Exception):
    """Base class for all errors raised by dset_infer."""


class DimensionError(DsetError, ValueError):
    """Input vector does not match the dimension of the set or target."""


class InfeasibleError(DsetError):
    """A constraint system has an empty feasible region.

    Attributes
    ----------
    active_set : list of int
        Inequality indices active when inconsistency was detected.
    violated : int or None
        Index of the constraint that could not be added.
    """

    def __init__(self, message, active_set=(), violated=None):
        super().__init__(message)
        self.active_set = list(active_set)
        self.violated = violated


class NonConvergenceError(DsetError):
    """Iteration cap exceeded."""


class MMViolationError(DsetError):
    """The MM objective increased, which signals a gradient or prox bug."""


class InitializationError(DsetError):
    """No valid starting point could be found for a sampler."""


class UnreliableEstimateError(DsetError):
    """Importance weights degenerated below the usable effective sample size."""


class CalibrationRefused(DsetError):
    """The requested budget is not below the unconstrained expected distance."""

    def __init__(self, message, unconstrained_moment):
        super().__init__(message)
        self.unconstrained_moment = unconstrained_moment


class BudgetUnreachableError(DsetError):
    """Bracket expansion hit its ceiling before the moment fell below the budget."""


class ConfigError(DsetError, ValueError):
    """Malformed experiment configuration."""


class NearBoundaryWarning(RuntimeWarning):
    """Unsquared-distance subgradient evaluated at a numerically tiny distance."""
