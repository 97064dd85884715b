"""Scaling-law tooling for dense retrieval.

Submodules: ``metrics`` (contrastive entropy, ranking metrics),
``lawfit`` (single and joint power-law fits), ``budget`` (cost model and
allocation), ``toysim`` (a small trainable retrieval simulator) and ``cli``.
"""

from .budget import (
    Allocation,
    CostFactorInputs,
    CostModel,
    budget_curve,
    derive_cost_factors,
    optimal_allocation,
    total_cost,
)
from .errors import (
    ComputationError,
    ConvergenceError,
    DivergenceError,
    FitError,
    InfeasibleBudgetError,
    InputError,
)
from .lawfit import (
    JointLawFit,
    JointScalingLawRegressor,
    PowerLawFit,
    PowerLawRegressor,
    fit_joint_law,
    fit_single_law,
    predict_joint,
    predict_single,
)
from .metrics import (
    CorrelationReport,
    EvalSample,
    RankedJudgments,
    contrastive_entropy,
    correlate,
    map_at_k,
    ndcg_at_k,
    recall_at_k,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ComputationError",
    "ConvergenceError",
    "CorrelationReport",
    "CostFactorInputs",
    "CostModel",
    "DivergenceError",
    "EvalSample",
    "FitError",
    "InfeasibleBudgetError",
    "InputError",
    "JointLawFit",
    "JointScalingLawRegressor",
    "PowerLawFit",
    "PowerLawRegressor",
    "RankedJudgments",
    "budget_curve",
    "contrastive_entropy",
    "correlate",
    "derive_cost_factors",
    "fit_joint_law",
    "fit_single_law",
    "map_at_k",
    "ndcg_at_k",
    "optimal_allocation",
    "predict_joint",
    "predict_single",
    "recall_at_k",
    "total_cost",
]
