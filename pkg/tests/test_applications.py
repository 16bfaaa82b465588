import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from oracles import cvx_penalized_cara
from rdro.applications import (
    FacilityInstance,
    FacilityUtility,
    HealthcareInstance,
    INVESTMENT73,
    InvestmentInstance,
    counterexample_instance,
    facility_second_stage,
    facility_total_cost,
    investment73,
    make_facility_problem,
    make_healthcare_problem,
    make_investment_problem,
    make_pricing_kernel,
    random_facility_instance,
    solve_counterexample,
    verify_counterexample,
    worst_case_value,
)
from rdro.errors import ConfigurationError, DomainError, InfeasibleError
from rdro.solver import outer_gradient, solve_penalized
from rdro.transport import ScalingConfig, oracle_inner
from rdro.utility import ShortageUtility

# Exact penalized optimum of the 50-atom CARA setup at theta = 1, seed 0,
# from the convex dual program in tests/oracles.py (recomputed by the slow test).
CVX_PENALIZED_THETA1 = -0.9777118002269867
CVX_ETA_THETA1 = 0.01851502606263683


def test_kernel_determinism_and_degenerate_limit():
    np.testing.assert_array_equal(make_pricing_kernel(20, 0.5, 4), make_pricing_kernel(20, 0.5, 4))
    np.testing.assert_allclose(make_pricing_kernel(20, 1e-9, 4), 1.0, atol=1e-8)
    assert 0.99 <= make_pricing_kernel(100_000, 0.5, 0).mean() <= 1.01
    with pytest.raises(DomainError):
        make_pricing_kernel(0)


def test_investment_problem_shape():
    prob, _, _ = investment73()
    assert prob.n == INVESTMENT73["n"]
    np.testing.assert_array_equal(prob.y_values, [0.0, 1.0])
    np.testing.assert_allclose(prob.nu0, [0.5, 0.5])
    x = np.linspace(0, 1, prob.n)
    np.testing.assert_allclose(prob.cost(x), -np.exp(-0.5 * (x[:, None] + prob.y_values)) / 0.5)
    with pytest.raises(ConfigurationError):
        InvestmentInstance(np.array([1.0, -1.0]))


def test_investment_against_exact_program():
    prob, outer, scaling = investment73()
    rep = solve_penalized(prob, None, outer, scaling)
    # the entropic value sits slightly above the exact one: the adversary is smoothed
    assert 0 <= rep.penalized_value - CVX_PENALIZED_THETA1 <= 1e-3
    assert abs(rep.eta - CVX_ETA_THETA1) <= 1e-3
    assert prob.decision_set.weights @ rep.x_star == pytest.approx(1.0, abs=1e-6)
    assert spearmanr(rep.x_star, prob.decision_set.weights / prob.p).statistic < -0.5


@pytest.mark.slow
def test_exact_program_recomputes_frozen_value():
    prob, _, _ = investment73()
    value, _, _, eta = cvx_penalized_cara(prob.p, prob.decision_set.weights / prob.p, 1.0, 0.5,
                                          prob.y_values, prob.nu0, 1.0)
    assert value == pytest.approx(CVX_PENALIZED_THETA1, abs=1e-6)
    assert eta == pytest.approx(CVX_ETA_THETA1, abs=1e-5)


def test_shortage_examples():
    inst = HealthcareInstance([2.0, 2.0], 4.0, 0.0, [[1.0, 2.0], [0.5, 1.5]])
    prob = make_healthcare_problem(inst, 1.0)
    assert worst_case_value(prob, [2.0, 2.0]) == pytest.approx(0.0, abs=1e-12)
    one = make_healthcare_problem(HealthcareInstance([3.0], 3.0, 0.0, [[2.5]]), 1.0)
    assert worst_case_value(one, [0.0]) == pytest.approx(-2.5, abs=1e-12)


def test_healthcare_2x2_against_oracle():
    inst = HealthcareInstance([2.0, 2.0], 3.0, 0.2, [[1.8, 0.3], [0.4, 1.6]],
                              nu0=[0.3, 0.7], p=[0.4, 0.6])
    prob = make_healthcare_problem(inst, 0.8, epsilon=1e-4)
    x = np.array([[0.5, 1.0], [1.2, 0.2]])
    cfg = ScalingConfig(tolerance=1e-10, max_iterations=100_000, epsilon_scaling=True)
    ref, _ = oracle_inner(prob.cost(x), prob.p, prob.nu0, 0.8)
    assert abs(worst_case_value(prob, x, cfg) - ref) <= 1e-3


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000))
def test_shortage_midpoint_concavity(seed):
    rng = np.random.default_rng(seed)
    u = ShortageUtility()
    x, z = rng.uniform(0, 2, (2, 1, 3))
    y = rng.uniform(0, 2, (4, 3))
    mid = u.value(0.5 * (x + z), y)
    assert np.all(mid >= 0.5 * (u.value(x, y) + u.value(z, y)) - 1e-12)


def test_counterexample_continuum():
    values = verify_counterexample([1.0, 1.25, 1.5])
    assert [k for k, _ in values] == [1.0, 1.25, 1.5]
    assert all(abs(v) <= 1e-9 for _, v in values)
    with pytest.raises(DomainError):
        verify_counterexample([2.0])
    inst = counterexample_instance()
    assert inst.capacity == 3.0 and inst.coverage == 0.5


def test_counterexample_solver_stops_at_distinct_optima():
    a, b = solve_counterexample(1.0), solve_counterexample(1.5)
    assert np.max(np.abs(a.x_star - b.x_star)) > 0.1
    assert a.penalized_value == pytest.approx(b.penalized_value, abs=1e-6)


def small_facility():
    return FacilityInstance(opening_cost=[2.0, 3.0], capacity=[5.0, 5.0], demand=[3.0],
                            service_cost=[[1.0], [2.0]], budget=5.0,
                            failure_atoms=[[1.0, 1.0], [0.5, 1.0]])


def test_facility_examples():
    one = FacilityInstance([1.0], [4.0], [3.0], [[2.0]], 1.0)
    cost, z = facility_second_stage(one, [1.0], [1.0])
    assert cost == 6.0
    np.testing.assert_allclose(z, [[3.0]])
    inst = small_facility()
    _, z = facility_second_stage(inst, [1.0, 1.0], [1.0, 1.0])
    np.testing.assert_allclose(z, [[3.0], [0.0]])
    empty = FacilityInstance([1.0, 1.0], [2.0, 2.0], [0.0], [[1.0], [1.0]], 1.0)
    assert facility_total_cost(empty, [0.0, 0.0], [1.0, 1.0]) == 0.0
    x = np.array([0.7, 0.9])
    doubled = FacilityInstance([4.0, 6.0], [5.0, 5.0], [3.0], [[1.0], [2.0]], 5.0)
    assert facility_total_cost(doubled, x, [1, 1]) - facility_total_cost(inst, x, [1, 1]) \
        == pytest.approx(inst.opening_cost @ x)


def test_facility_infeasible():
    inst = small_facility()
    with pytest.raises(InfeasibleError) as info:
        facility_second_stage(inst, [0.1, 0.2], [1.0, 1.0])
    assert info.value.deficit == pytest.approx(1.5)


@pytest.mark.parametrize("seed", range(10))
def test_facility_cost_is_convex(seed):
    rng = np.random.default_rng(seed)
    inst = random_facility_instance(3, 4, seed, integral=False)
    y = inst.failure_atoms[0]
    xa, xb = rng.uniform(0.8, 1.0, (2, 3))
    mid = facility_total_cost(inst, 0.5 * (xa + xb), y)
    assert mid <= 0.5 * (facility_total_cost(inst, xa, y) + facility_total_cost(inst, xb, y)) + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_facility_subgradient(seed):
    rng = np.random.default_rng(seed)
    inst = random_facility_instance(3, 4, seed, integral=False)
    util = FacilityUtility(inst)
    x = rng.uniform(0.85, 1.0, (1, 3))
    y = inst.failure_atoms[:1]
    g = util.grad(x, y)[0, 0]
    # piecewise linear: a supporting hyperplane at x bounds the concave value from above
    for _ in range(20):
        z = np.clip(x + rng.normal(0, 0.05, x.shape), 0.8, 1.0)
        assert util.value(z, y)[0, 0] <= util.value(x, y)[0, 0] + g @ (z - x)[0] + 1e-9


def test_facility_problem_construction():
    inst = small_facility()
    prob = make_facility_problem(inst, 1.0)
    assert prob.shape == (1, 2)
    x = np.array([[1.0, 1.0]])
    assert prob.cost(x).shape == (1, 2)
    assert outer_gradient(prob, x, np.array([[0.5, 0.5]])).shape == (1, 2)
    with pytest.raises(ConfigurationError):
        make_facility_problem(FacilityInstance([1.0], [4.0], [3.0], [[2.0]], 1.0), 1.0)
    with pytest.raises(ConfigurationError):
        FacilityInstance([0.0], [4.0], [3.0], [[2.0]], 1.0).decision_set
