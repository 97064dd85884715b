"""Exception hierarchy.

Input problems (bad shapes, violated preconditions) derive from
``ValueError``; failures of a numerical procedure on valid input derive
from ``ComputationError``. The CLI maps the two families to exit codes 2
and 3.
"""


class InputError(ValueError):
    """Arguments violate a documented precondition."""


class ComputationError(RuntimeError):
    """A well-formed computation could not produce a result."""


class FitError(ComputationError):
    """A curve fit failed or hit a degenerate configuration."""


class ConvergenceError(FitError):
    """The optimizer ran out of evaluations.

    ``best_params`` holds the best parameters seen so far.
    """

    def __init__(self, message, best_params=None, best_value=None):
        super().__init__(message)
        self.best_params = best_params
        self.best_value = best_value


class InfeasibleBudgetError(ComputationError):
    """No allocation satisfies the budget constraint."""


class DivergenceError(ComputationError):
    """Training produced a non-finite loss."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
