"""Lifecycle cost model and budget-constrained model/data allocation.

Cost of a model with ``n`` parameters trained on ``d`` annotated pairs::

    Z(n, d) = z_data * d + z_train * n + z_infer * n

(the inference term only when ``include_inference``). For a fixed budget,
every ``n`` determines the largest affordable ``d``; the optimizer searches
over ``n`` alone.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ._optimize import golden_section
from .errors import InfeasibleBudgetError, InputError
from .lawfit import JointLawFit, predict_joint

SECONDS_PER_HOUR = 3600
COARSE_GRID_POINTS = 400
REFINE_RTOL = 1e-6
DEFAULT_MIN_PARAMS = 1e3


@dataclass(frozen=True)
class CostModel:
    z_data: float
    z_train: float
    z_infer: float
    include_inference: bool = False

    def __post_init__(self):
        if not (self.z_data > 0 and self.z_train > 0 and self.z_infer >= 0):
            raise InputError(
                "cost factors need z_data > 0, z_train > 0, z_infer >= 0, got "
                f"({self.z_data}, {self.z_train}, {self.z_infer})"
            )

    @property
    def per_param(self) -> float:
        return self.z_train + (self.z_infer if self.include_inference else 0.0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CostFactorInputs:
    """Assumptions behind the cost factors. Defaults are the A100 web-search scenario."""

    dollars_per_pair: float = 0.6
    steps: int = 10_000
    query_tokens: int = 30
    passage_tokens: int = 60
    passages_per_step: int = 2
    batch_size: int = 256
    flops_per_param_train: int = 6
    flops_per_param_infer: int = 2
    gpu_dollars_per_hour: float = 3.93
    gpu_peak_flops: float = 312e12
    utilization: float = 0.25
    corpus_pages: float = 30e12
    tokens_per_page: int = 512

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InputError(f"{name} must be strictly positive, got {value}")
        if self.utilization > 1:
            raise InputError(f"utilization must be at most 1, got {self.utilization}")


@dataclass(frozen=True)
class Allocation:
    n_star: float
    d_star: float
    predicted_loss: float
    total_cost: float
    include_inference: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def total_cost(model: CostModel, n: float, d: float) -> float:
    if not (n > 0 and d > 0):
        raise InputError(f"n and d must be positive, got n={n}, d={d}")
    return model.z_data * d + model.per_param * n


def derive_cost_factors(inputs: CostFactorInputs, include_inference: bool = False) -> CostModel:
    """Dollar cost per annotated pair, per trained parameter and per served parameter."""
    dollars_per_flop = inputs.gpu_dollars_per_hour / (
        inputs.gpu_peak_flops * SECONDS_PER_HOUR * inputs.utilization
    )
    train_tokens = (
        inputs.steps
        * (inputs.query_tokens + inputs.passages_per_step * inputs.passage_tokens)
        * inputs.batch_size
    )
    infer_tokens = inputs.corpus_pages * inputs.tokens_per_page
    return CostModel(
        z_data=inputs.dollars_per_pair,
        z_train=train_tokens * inputs.flops_per_param_train * dollars_per_flop,
        z_infer=infer_tokens * inputs.flops_per_param_infer * dollars_per_flop,
        include_inference=include_inference,
    )


def data_for_budget(model: CostModel, n: float, budget: float) -> float:
    """Annotated pairs affordable after paying for an ``n``-parameter model."""
    if not n > 0:
        raise InputError(f"n must be positive, got {n}")
    d = (budget - model.per_param * n) / model.z_data
    if not d >= 1:
        raise InfeasibleBudgetError(
            f"model exhausts budget: n={n:g} leaves {max(d, 0.0):g} pairs from ${budget:g}"
        )
    return d


def max_feasible_params(model: CostModel, budget: float) -> float:
    """Largest ``n`` that still leaves one annotated pair."""
    return (budget - model.z_data) / model.per_param


def default_bounds(model: CostModel, budget: float) -> tuple:
    return (DEFAULT_MIN_PARAMS, budget / model.per_param)


def feasible_bounds(model, budget, n_bounds):
    if not (budget > 0 and math.isfinite(budget)):
        raise InfeasibleBudgetError(f"budget must be positive, got {budget}")
    if n_bounds is None:
        n_bounds = default_bounds(model, budget)
    lo, hi = float(n_bounds[0]), float(n_bounds[1])
    if not (0 < lo < hi):
        raise InputError(f"n_bounds must satisfy 0 < low < high, got {n_bounds}")
    # keep clear of the d = 1 edge, where rounding flips feasibility
    hi = min(hi, max_feasible_params(model, budget) * (1 - 1e-9))
    if hi <= lo:
        raise InfeasibleBudgetError(
            f"budget ${budget:g} cannot pay for {lo:g} parameters plus one annotated pair"
        )
    return lo, hi


def _loss_at(law, model, budget, n):
    return predict_joint(law, n, data_for_budget(model, n, budget))


def optimal_allocation(law: JointLawFit, model: CostModel, budget: float,
                       n_bounds: Optional[Sequence[float]] = None) -> Allocation:
    """Model size minimising the predicted loss when the rest of the budget buys data.

    A 400-point log grid over the feasible part of ``n_bounds`` brackets the
    minimum; golden-section search in log n refines it to 1e-6 relative.
    """
    if not isinstance(law, JointLawFit):
        raise InputError("optimal_allocation needs a JointLawFit")
    if not isinstance(model, CostModel):
        raise InputError("optimal_allocation needs a CostModel")
    lo, hi = feasible_bounds(model, budget, n_bounds)

    log_grid = np.linspace(math.log(lo), math.log(hi), COARSE_GRID_POINTS)
    log_grid[-1] = math.log(hi)
    losses = np.array([_loss_at(law, model, budget, min(math.exp(t), hi)) for t in log_grid])
    i = int(np.argmin(losses))
    a = log_grid[max(i - 1, 0)]
    b = log_grid[min(i + 1, len(log_grid) - 1)]

    def objective(t):
        return _loss_at(law, model, budget, min(math.exp(t), hi))

    # relative tolerance in n is an absolute tolerance in log n
    t_best, loss_best = golden_section(objective, a, b, tol=math.log1p(REFINE_RTOL))
    if losses[i] < loss_best:
        t_best, loss_best = log_grid[i], float(losses[i])
    n_star = min(math.exp(t_best), hi)
    d_star = data_for_budget(model, n_star, budget)
    return Allocation(
        n_star=n_star,
        d_star=d_star,
        predicted_loss=predict_joint(law, n_star, d_star),
        total_cost=total_cost(model, n_star, d_star),
        include_inference=model.include_inference,
    )


def budget_curve(law: JointLawFit, model: CostModel, budget: float, n_grid) -> list:
    """Predicted loss at each grid size with the budget fully spent on data.

    Returns ``(n, loss, feasible)`` triples aligned with ``n_grid``;
    infeasible sizes carry ``nan`` as the loss.
    """
    n_grid = list(n_grid)
    if not n_grid:
        raise InputError("budget_curve needs a non-empty grid")
    out = []
    for n in n_grid:
        n = float(n)
        if not n > 0:
            raise InputError(f"grid sizes must be positive, got {n}")
        try:
            out.append((n, _loss_at(law, model, budget, n), True))
        except InfeasibleBudgetError:
            out.append((n, float("nan"), False))
    return out
