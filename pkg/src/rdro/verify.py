"""Self-check suites run by ``rdro verify``.

Each suite returns a list of :class:`Check` rows; a suite passes when all
its checks do.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .applications import investment73, solve_counterexample, verify_counterexample
from .projection import BoxBudget, BudgetOrthant
from .solver import cross_duality_violations, theta_sweep
from .transport import ScalingConfig, inner_value, oracle_inner


@dataclass(frozen=True)
class Check:
    """``measured <= tolerance``, or ``measured > tolerance`` when ``at_least``."""

    name: str
    measured: float
    tolerance: float
    at_least: bool = False

    @property
    def passed(self) -> bool:
        if self.at_least:
            return bool(self.measured > self.tolerance)
        return bool(self.measured <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        bound = ">" if self.at_least else "<="
        return f"{status}  {self.name}: measured {self.measured:.3e} (required {bound} {self.tolerance:.1e})"


def inner_oracle_suite(instances: int = 50, seed: int = 0) -> list[Check]:
    """Entropic inner value against exhaustive grid search on 2x2 problems."""
    rng = np.random.default_rng(seed)
    cfg = ScalingConfig(epsilon=1e-4, max_iterations=100_000, tolerance=1e-9, epsilon_scaling=True)
    checks = []
    for theta in (0.1, 1.0, 10.0):
        worst = 0.0
        for _ in range(instances):
            cost = rng.uniform(-1.0, 1.0, size=(2, 2))
            p = rng.dirichlet(np.ones(2))
            nu0 = rng.dirichlet(np.ones(2))
            value, _ = inner_value(cost, p, nu0, theta, cfg)
            ref, _ = oracle_inner(cost, p, nu0, theta)
            worst = max(worst, abs(value - ref))
        checks.append(Check(f"inner value vs grid oracle, theta={theta:g}", worst, 1e-3))
    return checks


def polygon_vertices(decision_set) -> np.ndarray:
    """Vertices (counterclockwise) of a 2-D budget orthant or box-budget set."""
    if isinstance(decision_set, BudgetOrthant):
        w, b = decision_set.weights, decision_set.budget
        return np.array([[0.0, 0.0], [b / w[0], 0.0], [0.0, b / w[1]]])
    u, w, cap = decision_set.upper, decision_set.weights, decision_set.capacity
    box = [np.array(v, dtype=float) for v in ([0, 0], [u[0], 0], [u[0], u[1]], [0, u[1]])]
    # clip the box against w.x <= cap
    out = []
    for a, b in zip(box, box[1:] + box[:1]):
        fa, fb = w @ a - cap, w @ b - cap
        if fa <= 0:
            out.append(a)
        if fa * fb < 0:
            out.append(a + fa / (fa - fb) * (b - a))
    return np.array(out)


def grid_projection(decision_set, x, resolution=1e-4):
    """Nearest point among dense grids laid along every edge of the polygon.

    Returns ``x`` itself when it is feasible.
    """
    x = np.asarray(x, dtype=float)
    verts = polygon_vertices(decision_set)
    if decision_set.residual(x) <= 0:
        return x
    pts = []
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        steps = max(2, int(np.ceil(np.linalg.norm(b - a) / resolution)) + 1)
        t = np.linspace(0.0, 1.0, steps)[:, None]
        pts.append(a + t * (b - a))
    cand = np.vstack(pts)
    return cand[np.argmin(np.sum((cand - x) ** 2, axis=1))]


def projection_suite(instances: int = 100, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    oracle_gap = idem = expand = 0.0
    for k in range(instances):
        if k % 2 == 0:
            dset = BudgetOrthant(rng.uniform(0.5, 2.0, 2), rng.uniform(0.2, 1.5))
        else:
            dset = BoxBudget(rng.uniform(0.2, 1.0, 2), rng.uniform(0.2, 1.5), rng.uniform(0.5, 2.0, 2))
        x, z = rng.normal(0.5, 1.0, size=(2, 2))
        px, pz = dset.project(x), dset.project(z)
        oracle_gap = max(oracle_gap, float(np.max(np.abs(px - grid_projection(dset, x)))))
        idem = max(idem, float(np.max(np.abs(dset.project(px) - px))))
        expand = max(expand, float(np.linalg.norm(px - pz) - np.linalg.norm(x - z)))
    return [
        Check("projection vs dense grid (resolution 1e-3)", oracle_gap, 1e-3),
        Check("idempotence", idem, 1e-10),
        Check("non-expansiveness", max(expand, 0.0), 1e-10),
    ]


def counterexample_suite() -> list[Check]:
    ks = np.round(np.arange(1.0, 1.5 + 1e-9, 0.05), 10)
    values = verify_counterexample(ks)
    worst = max(abs(v) for _, v in values)
    a, b = solve_counterexample(1.0), solve_counterexample(1.5)
    spread = float(np.max(np.abs(a.x_star - b.x_star)))
    return [
        Check("worst-case value 0 on k in [1, 1.5]", worst, 1e-9),
        Check("spread of optimal decisions", spread, 0.1, at_least=True),
        Check("equal objective values", abs(a.penalized_value - b.penalized_value), 1e-6),
    ]


def duality_suite(thetas=(0.25, 0.5, 1.0, 2.0, 4.0, 8.0), max_workers: int = 1) -> list[Check]:
    problem, outer, scaling = investment73()
    reports = theta_sweep(problem, thetas, outer, scaling, max_workers=max_workers)
    identity = max(abs(r.constrained_value + r.theta * r.eta - r.penalized_value) for r in reports)
    v = cross_duality_violations(reports)
    off = v[~np.eye(len(reports), dtype=bool)]
    etas = np.array([r.eta for r in reports])
    return [
        Check("J_c + theta * eta = J_p", identity, 1e-12),
        Check("cross-point duality violation", max(float(off.max()), 0.0), 1e-3),
        Check("eta nonincreasing in theta", max(float(np.max(np.diff(etas))), 0.0), 1e-6),
    ]


SUITES: dict[str, Callable[..., list[Check]]] = {
    "inner-oracle": inner_oracle_suite,
    "projection": projection_suite,
    "counterexample": counterexample_suite,
    "duality": duality_suite,
}
