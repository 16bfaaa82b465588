import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from oracles import transport_vertex_oracle
from rdro.errors import DimensionError, DomainError, InfeasibleError
from rdro.flows import solve_transport


def random_case(rng, n, m, integral=True):
    if integral:
        c = rng.integers(0, 20, (n, m)).astype(float)
        d = rng.integers(0, 9, m).astype(float)
        s = rng.integers(1, 9, n).astype(float)
    else:
        c = rng.uniform(0, 20, (n, m))
        d = rng.uniform(0, 9, m)
        s = rng.uniform(1, 9, n)
    s *= max(1.0, 1.3 * d.sum() / s.sum())
    return c, s, d


def linprog_value(c, s, d):
    n, m = c.shape
    a_eq = np.zeros((m, n * m))
    a_ub = np.zeros((n, n * m))
    for i in range(n):
        for j in range(m):
            a_eq[j, i * m + j] = 1.0
            a_ub[i, i * m + j] = 1.0
    res = linprog(c.ravel(), A_ub=a_ub, b_ub=s, A_eq=a_eq, b_eq=d, method="highs")
    return res.fun


def test_single_pair():
    sol = solve_transport([[3.0]], [5.0], [2.0])
    assert sol.cost == 6.0
    np.testing.assert_allclose(sol.flow, [[2.0]])


def test_cheaper_source_saturates_first():
    sol = solve_transport([[1.0], [2.0]], [5.0, 5.0], [4.0])
    np.testing.assert_allclose(sol.flow, [[4.0], [0.0]])


def test_infeasible_reports_deficit():
    with pytest.raises(InfeasibleError) as info:
        solve_transport([[1.0, 1.0]], [2.0], [1.5, 1.0])
    assert info.value.deficit == pytest.approx(0.5)


def test_input_errors():
    with pytest.raises(DimensionError):
        solve_transport(np.zeros((2, 2)), [1.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        solve_transport([[-1.0]], [1.0], [1.0])


@pytest.mark.parametrize("seed", range(5))
def test_matches_vertex_enumeration(seed):
    c, s, d = random_case(np.random.default_rng(seed), 3, 3)
    ref, _ = transport_vertex_oracle(c, s, d)
    assert solve_transport(c, s, d).cost == pytest.approx(ref, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 6), st.integers(1, 6), st.booleans())
def test_optimality_certificates(seed, n, m, integral):
    c, s, d = random_case(np.random.default_rng(seed), n, m, integral)
    sol = solve_transport(c, s, d)
    z = sol.flow
    scale = max(1.0, d.sum())
    assert np.all(z >= 0)
    np.testing.assert_allclose(z.sum(axis=0), d, atol=1e-9 * scale)
    assert np.all(z.sum(axis=1) <= s + 1e-9 * scale)
    # dual feasibility and zero duality gap
    w, v = sol.supply_price, sol.demand_price
    assert np.all(w >= 0)
    assert np.all(v[None, :] - w[:, None] <= c + 1e-9)
    assert d @ v - s @ w == pytest.approx(sol.cost, abs=1e-8 * max(1.0, sol.cost))
    assert sol.cost == pytest.approx(linprog_value(c, s, d), abs=1e-7 * max(1.0, sol.cost))


def random_assignment(rng, s, d):
    """Greedy fill in a random order; feasible whenever supply covers demand."""
    left = s.copy()
    z = np.zeros((s.size, d.size))
    for j in rng.permutation(d.size):
        need = d[j]
        for i in rng.permutation(s.size):
            take = min(need, left[i]) * (rng.uniform(0.3, 1.0) if need > 0 else 0)
            z[i, j] += take
            left[i] -= take
            need -= take
        for i in range(s.size):
            take = min(need, left[i])
            z[i, j] += take
            left[i] -= take
            need -= take
    return z


def test_beats_random_assignments():
    rng = np.random.default_rng(11)
    c, s, d = random_case(rng, 4, 5, integral=False)
    best = solve_transport(c, s, d).cost
    for _ in range(1000):
        z = random_assignment(rng, s, d)
        np.testing.assert_allclose(z.sum(axis=0), d, atol=1e-9)
        assert best <= np.sum(c * z) + 1e-9
