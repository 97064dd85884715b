import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_allocation
from retrieval_scaling.budget import (
    CostFactorInputs,
    CostModel,
    budget_curve,
    data_for_budget,
    derive_cost_factors,
    feasible_bounds,
    optimal_allocation,
    total_cost,
)
from retrieval_scaling.errors import InfeasibleBudgetError, InputError
from retrieval_scaling.lawfit import JointLawFit, predict_joint

LAW = JointLawFit(a=3.6e4, b=7.1e3, alpha=0.56, beta=1.31, floor=0.03, rmse=0.0, n_points=0)
ROUNDED = CostModel(z_data=0.6, z_train=3.22e-8, z_infer=0.43)


def factors(include_inference=False):
    return derive_cost_factors(CostFactorInputs(), include_inference)


class TestCostModel:
    def test_with_inference(self):
        model = CostModel(0.6, 3.22e-8, 0.43, include_inference=True)
        # 0.6 * 1000 + (3.22e-8 + 0.43) * 1e6
        assert total_cost(model, 1e6, 1000) == pytest.approx(430_600.0322, rel=1e-12)

    def test_without_inference(self):
        assert total_cost(ROUNDED, 13e9, 32_635.67) == pytest.approx(20_000.0, rel=1e-6)

    @given(st.floats(1, 1e12), st.floats(1, 1e9))
    def test_data_term_linear(self, n, d):
        diff1 = total_cost(ROUNDED, n, 2 * d) - total_cost(ROUNDED, n, d)
        assert diff1 == pytest.approx(ROUNDED.z_data * d, rel=1e-9)

    @given(st.floats(1, 1e12), st.floats(1, 1e9), st.floats(0.1, 10))
    def test_homogeneous(self, n, d, c):
        assert total_cost(ROUNDED, c * n, c * d) == pytest.approx(c * total_cost(ROUNDED, n, d), rel=1e-12)

    def test_nonpositive(self):
        with pytest.raises(InputError):
            total_cost(ROUNDED, 0, 1)
        with pytest.raises(InputError):
            CostModel(0.0, 1e-8, 0.1)


class TestDerivedFactors:
    def test_defaults(self):
        model = factors()
        assert model.z_train == pytest.approx(3.2246e-8, rel=1e-4)
        assert model.z_infer == pytest.approx(0.42995, rel=1e-4)
        assert model.z_data == 0.6

    def test_hand_arithmetic(self):
        per_flop = 3.93 / (312e12 * 3600 * 0.25)
        train = 10_000 * (30 + 2 * 60) * 256 * 6 * per_flop
        infer = 30e12 * 512 * 2 * per_flop
        model = factors()
        assert model.z_train == pytest.approx(train, rel=1e-14)
        assert model.z_infer == pytest.approx(infer, rel=1e-14)

    def test_utilization_scaling(self):
        full = derive_cost_factors(CostFactorInputs(utilization=1.0))
        base = factors()
        assert full.z_train * 4 == pytest.approx(base.z_train, rel=1e-14)
        assert full.z_infer * 4 == pytest.approx(base.z_infer, rel=1e-14)

    @pytest.mark.parametrize("field", ["corpus_pages", "gpu_peak_flops", "dollars_per_pair"])
    def test_nonpositive_fields(self, field):
        with pytest.raises(InputError):
            CostFactorInputs(**{field: 0})

    def test_utilization_above_one(self):
        with pytest.raises(InputError):
            CostFactorInputs(utilization=1.5)


class TestDataForBudget:
    def test_inversion(self):
        model = CostModel(0.6, 3.22e-8, 0.43)
        assert data_for_budget(model, 13e9, 20_000) == pytest.approx(32_635.67, rel=1e-6)

    def test_exhausted(self):
        model = CostModel(0.6, 3.22e-8, 0.43)
        with pytest.raises(InfeasibleBudgetError, match="model exhausts budget"):
            data_for_budget(model, 20_000 / 3.22e-8, 20_000)

    def test_near_degenerate(self):
        model = CostModel(1.0, 1e-12, 0.0)
        assert data_for_budget(model, 1, 101) == pytest.approx(101, rel=1e-9)


class TestOptimalAllocation:
    def test_no_inference_billions(self):
        model = factors()
        alloc = optimal_allocation(LAW, model, 20_000, n_bounds=(1e5, 1e12))
        assert 2e9 <= alloc.n_star <= 5e10
        lo, hi = feasible_bounds(model, 20_000, (1e5, 1e12))
        _, oracle = brute_force_allocation(LAW, model, 20_000, lo, hi)
        assert alloc.predicted_loss <= oracle * (1 + 1e-3)
        assert alloc.total_cost == pytest.approx(20_000, rel=1e-9)

    @pytest.mark.parametrize("budget", [1e6, 5e6, 1e7])
    def test_with_inference_millions(self, budget):
        model = factors(include_inference=True)
        alloc = optimal_allocation(LAW, model, budget)
        assert 1e5 <= alloc.n_star <= 1e8
        lo, hi = feasible_bounds(model, budget, None)
        n_oracle, oracle = brute_force_allocation(LAW, model, budget, lo, hi)
        assert abs(alloc.predicted_loss - oracle) <= 1e-3 * oracle
        assert alloc.include_inference

    def test_budget_below_minimum(self):
        with pytest.raises(InfeasibleBudgetError):
            optimal_allocation(LAW, factors(), 0.5)
        with pytest.raises(InfeasibleBudgetError):
            optimal_allocation(LAW, factors(), 0.0)

    def test_wrong_law_type(self):
        with pytest.raises(InputError):
            optimal_allocation("law", factors(), 1e4)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(2e3, 1e6), st.floats(1.1, 5.0))
    def test_more_budget_never_hurts(self, budget, factor):
        model = factors()
        low = optimal_allocation(LAW, model, budget)
        high = optimal_allocation(LAW, model, budget * factor)
        assert high.predicted_loss <= low.predicted_loss * (1 + 1e-9)


class TestBudgetCurve:
    def test_interior_minimum(self):
        curve = budget_curve(LAW, factors(), 20_000, [1e6, 1e9, 1e12])
        losses = [c[1] for c in curve]
        assert curve[1][2] and losses[1] < losses[0]
        # 1e12 parameters cost more than the whole budget
        assert not curve[2][2] and math.isnan(losses[2])

    def test_single_point_matches_predict(self):
        model = factors()
        ((n, loss, ok),) = budget_curve(LAW, model, 20_000, [1e8])
        assert ok
        assert loss == predict_joint(LAW, 1e8, data_for_budget(model, 1e8, 20_000))

    def test_empty(self):
        with pytest.raises(InputError):
            budget_curve(LAW, factors(), 20_000, [])
