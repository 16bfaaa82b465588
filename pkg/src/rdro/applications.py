"""Instances for the robust investment, healthcare and facility models.

Each ``make_*_problem`` returns a :class:`~rdro.solver.PenalizedProblem`
on discrete atoms: ``n`` decision atoms with probabilities ``p`` and ``r``
environment atoms with nominal weights ``nu0``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .divergence import DivergenceKind
from .errors import ConfigurationError, DimensionError, DomainError, InfeasibleError
from .flows import solve_transport
from .projection import BoxBudget, BudgetOrthant, CoverageSimplex
from .solver import OuterConfig, PenalizedProblem, solve_penalized
from .transport import ScalingConfig, inner_value
from .utility import CARAUtility, ShortageUtility


def _frozen(a, ndim=None):
    a = np.array(a, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-D array, got shape {a.shape}")
    a.setflags(write=False)
    return a


def _probability(w, n, name):
    if w is None:
        return _frozen(np.full(n, 1.0 / n))
    w = _frozen(w, 1)
    if w.shape[0] != n or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ConfigurationError(f"{name} must be a probability vector of length {n}")
    return w


# investment ---------------------------------------------------------------

def make_pricing_kernel(n: int, volatility: float = 0.5, seed: int = 0) -> np.ndarray:
    """Lognormal state prices ``m_i = exp(sigma Z_i - sigma^2 / 2)``, mean one."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if not volatility > 0:
        raise DomainError("volatility must be positive")
    z = np.random.default_rng(seed).standard_normal(n)
    return np.exp(volatility * z - 0.5 * volatility ** 2)


@dataclass(frozen=True)
class InvestmentInstance:
    """Terminal-wealth atoms priced by ``pricing_kernel`` under budget ``x0``."""

    pricing_kernel: np.ndarray
    initial_wealth: float = 1.0
    risk_aversion: float = 0.5
    y_values: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    nu0: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None

    def __post_init__(self):
        m = _frozen(self.pricing_kernel, 1)
        if np.any(~(m > 0)):
            raise ConfigurationError("pricing kernel must be strictly positive")
        if not self.initial_wealth > 0:
            raise ConfigurationError("initial wealth must be positive")
        if not self.risk_aversion > 0:
            raise ConfigurationError("risk aversion must be positive")
        y = _frozen(self.y_values, 1)
        object.__setattr__(self, "pricing_kernel", m)
        object.__setattr__(self, "y_values", y)
        object.__setattr__(self, "nu0", _probability(self.nu0, y.shape[0], "nu0"))
        object.__setattr__(self, "p", _probability(self.p, m.shape[0], "p"))

    @property
    def n(self) -> int:
        return self.pricing_kernel.shape[0]

    @classmethod
    def generate(cls, n: int = 50, volatility: float = 0.5, seed: int = 0, **kwargs):
        return cls(make_pricing_kernel(n, volatility, seed), **kwargs)


def make_investment_problem(instance: InvestmentInstance, theta: float,
                            epsilon: float = 1e-2) -> PenalizedProblem:
    """CARA utility on the budget orthant ``sum p_i m_i x_i <= x0``."""
    budget = BudgetOrthant(instance.p * instance.pricing_kernel, instance.initial_wealth)
    return PenalizedProblem(
        utility=CARAUtility(instance.risk_aversion),
        p=instance.p,
        nu0=instance.nu0,
        y_values=instance.y_values,
        theta=theta,
        decision_set=budget,
        epsilon=epsilon,
        divergence_kind=DivergenceKind.KL,
    )


INVESTMENT73 = dict(n=50, volatility=0.5, initial_wealth=1.0, risk_aversion=0.5,
                    y_values=(0.0, 1.0), theta=1.0, epsilon=1e-2, step_size=20.0,
                    outer_tolerance=1e-9, max_outer_iterations=20_000,
                    scaling_tolerance=1e-10, scaling_max_iterations=10_000)


def investment73(seed: int = 0, theta: Optional[float] = None):
    """The 50-atom two-outcome CARA setup with its tuned solver settings.

    Returns ``(problem, outer_config, scaling_config)``.
    """
    c = INVESTMENT73
    inst = InvestmentInstance.generate(c["n"], c["volatility"], seed,
                                       initial_wealth=c["initial_wealth"],
                                       risk_aversion=c["risk_aversion"],
                                       y_values=np.array(c["y_values"]))
    problem = make_investment_problem(inst, c["theta"] if theta is None else theta, c["epsilon"])
    outer = OuterConfig(step_size=c["step_size"], outer_tolerance=c["outer_tolerance"],
                        max_outer_iterations=c["max_outer_iterations"])
    scaling = ScalingConfig(epsilon=c["epsilon"], tolerance=c["scaling_tolerance"],
                            max_iterations=c["scaling_max_iterations"])
    return problem, outer, scaling


# healthcare ---------------------------------------------------------------

def sample_demand_atoms(max_demands, r: int, seed: int = 0) -> np.ndarray:
    """``r`` demand vectors drawn uniformly from the box ``[0, M]``."""
    m = np.asarray(max_demands, dtype=float)
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(r, m.shape[0])) * m


@dataclass(frozen=True)
class HealthcareInstance:
    """Allocation across hospitals with capacity ``C`` and coverage ``beta``.

    ``demand_atoms`` is ``(r, m)``; every row must lie in ``[0, M]``.
    ``p`` weights the ``n`` allocation scenarios (one decision row each).
    """

    max_demands: np.ndarray
    capacity: float
    coverage: float
    demand_atoms: np.ndarray
    nu0: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None

    def __post_init__(self):
        M = _frozen(self.max_demands, 1)
        atoms = _frozen(np.atleast_2d(self.demand_atoms), 2)
        if atoms.shape[1] != M.shape[0]:
            raise DimensionError(f"demand atoms have {atoms.shape[1]} columns for {M.shape[0]} hospitals")
        if np.any(atoms < 0) or np.any(atoms > M + 1e-12):
            raise ConfigurationError("demand atoms must lie in [0, M]")
        if not self.capacity > 0:
            raise ConfigurationError("capacity must be positive")
        if not 0.0 <= self.coverage <= 1.0:
            raise ConfigurationError("coverage must lie in [0, 1]")
        object.__setattr__(self, "max_demands", M)
        object.__setattr__(self, "demand_atoms", atoms)
        object.__setattr__(self, "nu0", _probability(self.nu0, atoms.shape[0], "nu0"))
        object.__setattr__(self, "p", _probability(self.p, 1 if self.p is None else len(self.p), "p"))

    @property
    def hospitals(self) -> int:
        return self.max_demands.shape[0]

    @property
    def decision_set(self) -> CoverageSimplex:
        upper = np.full(self.hospitals, self.capacity)
        return CoverageSimplex(upper, self.capacity, self.coverage, self.p)


def make_healthcare_problem(instance: HealthcareInstance, theta: float,
                            epsilon: float = 1e-2) -> PenalizedProblem:
    """Negated shortage ``-sum_h max(y_h - x_h, 0)`` under a coverage constraint."""
    return PenalizedProblem(
        utility=ShortageUtility(),
        p=instance.p,
        nu0=instance.nu0,
        y_values=instance.demand_atoms,
        theta=theta,
        decision_set=instance.decision_set,
        epsilon=epsilon,
        divergence_kind=DivergenceKind.KL,
        decision_shape=(instance.hospitals,),
    )


def counterexample_instance(M: float = 1.0, r: int = 5, seed: int = 0) -> HealthcareInstance:
    """Two hospitals with ``M_1 = M_2 = M``, ``C = 3M`` and ``beta = 1/2``."""
    atoms = sample_demand_atoms([M, M], r, seed)
    return HealthcareInstance(np.array([M, M]), 3.0 * M, 0.5, atoms)


def worst_case_value(problem: PenalizedProblem, x, scaling_config: ScalingConfig = ScalingConfig()) -> float:
    """Penalized inner value ``min_nu E_nu[U(x, Y)] + theta KL(nu | nu0)`` at ``x``."""
    x = np.asarray(x, dtype=float).reshape(problem.shape)
    cfg = dataclasses.replace(scaling_config, epsilon=problem.epsilon)
    value, _ = inner_value(problem.cost(x), problem.p, problem.nu0, problem.theta, cfg,
                           divergence=problem.penalty)
    return value


def verify_counterexample(k_grid: Sequence[float], M: float = 1.0, theta: float = 1.0,
                          *, r: int = 5, seed: int = 0, epsilon: float = 1e-2):
    """``(k, worst-case value)`` at the constant allocation ``(kM, kM)``.

    Every demand atom is at most ``M <= kM``, so the shortage vanishes and
    each value is 0 for ``k`` in ``[1, 1.5]``.
    """
    ks = [float(k) for k in k_grid]
    if any(k < 1.0 - 1e-12 or k > 1.5 + 1e-12 for k in ks):
        raise DomainError("k must lie in [1, 1.5]")
    problem = make_healthcare_problem(counterexample_instance(M, r, seed), theta, epsilon)
    out = []
    for k in ks:
        x = np.full(problem.shape, k * M)
        if problem.decision_set.residual(x) > 1e-12:
            raise ConfigurationError(f"(kM, kM) is infeasible at k={k}")
        out.append((k, worst_case_value(problem, x)))
    return out


def solve_counterexample(k: float, M: float = 1.0, theta: float = 1.0, *, r: int = 5,
                         seed: int = 0, config: OuterConfig = OuterConfig()):
    """Run the outer solver on the counterexample started at ``(kM, kM)``."""
    problem = make_healthcare_problem(counterexample_instance(M, r, seed), theta)
    return solve_penalized(problem, np.full(problem.shape, k * M), config)


# facility location --------------------------------------------------------

@dataclass(frozen=True)
class FacilityInstance:
    """Facilities with cost rates ``f`` and capacities ``K`` serving demands ``d``.

    ``failure_atoms`` is ``(r, I)``, the effective-capacity fractions in
    ``[0, 1]`` of each scenario, weighted by ``nu0``.
    """

    opening_cost: np.ndarray
    capacity: np.ndarray
    demand: np.ndarray
    service_cost: np.ndarray
    budget: float
    failure_atoms: Optional[np.ndarray] = None
    nu0: Optional[np.ndarray] = None

    def __post_init__(self):
        f = _frozen(self.opening_cost, 1)
        K = _frozen(self.capacity, 1)
        d = _frozen(self.demand, 1)
        c = _frozen(self.service_cost, 2)
        if K.shape != f.shape or c.shape != (f.shape[0], d.shape[0]):
            raise DimensionError("facility arrays have inconsistent shapes")
        if np.any(K < 0) or np.any(d < 0) or np.any(f < 0) or np.any(c < 0):
            raise ConfigurationError("costs, capacities and demands must be nonnegative")
        if not self.budget >= 0:
            raise ConfigurationError("budget must be nonnegative")
        for name, val in (("opening_cost", f), ("capacity", K), ("demand", d), ("service_cost", c)):
            object.__setattr__(self, name, val)
        if self.failure_atoms is not None:
            y = _frozen(np.atleast_2d(self.failure_atoms), 2)
            if y.shape[1] != f.shape[0] or np.any(y < 0) or np.any(y > 1):
                raise ConfigurationError("failure atoms must be (r, I) fractions in [0, 1]")
            object.__setattr__(self, "failure_atoms", y)
            object.__setattr__(self, "nu0", _probability(self.nu0, y.shape[0], "nu0"))

    @property
    def facilities(self) -> int:
        return self.opening_cost.shape[0]

    @property
    def decision_set(self) -> BoxBudget:
        if np.any(self.opening_cost <= 0):
            raise ConfigurationError("the budget set needs strictly positive opening costs")
        return BoxBudget(np.ones(self.facilities), self.budget, self.opening_cost)


def _effective_capacity(instance, x, y):
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != instance.facilities or y.shape[0] != instance.facilities:
        raise DimensionError("x and y need one entry per facility")
    return instance.capacity * x * y


def facility_second_stage(instance: FacilityInstance, x, y):
    """Optimal assignment cost and plan given capacity levels ``x`` and fractions ``y``."""
    sol = solve_transport(instance.service_cost, _effective_capacity(instance, x, y), instance.demand)
    return sol.cost, sol.flow


def facility_total_cost(instance: FacilityInstance, x, y) -> float:
    """Opening cost plus the second-stage assignment cost."""
    cost, _ = facility_second_stage(instance, x, y)
    return float(instance.opening_cost @ np.asarray(x, dtype=float)) + cost


@dataclass(frozen=True)
class FacilityUtility:
    """Negated total cost ``-(f.x + g(x, y))`` with an LP-dual subgradient.

    The outer solve on this utility is a projected subgradient method; an
    infeasible second stage raises :class:`~rdro.errors.InfeasibleError`.
    """

    instance: FacilityInstance

    def _each(self, x, y):
        x, y = np.atleast_2d(x), np.atleast_2d(y)
        for i in range(x.shape[0]):
            for j in range(y.shape[0]):
                yield i, j, x[i], y[j]

    def value(self, x, y):
        x, y = np.atleast_2d(x), np.atleast_2d(y)
        out = np.empty((x.shape[0], y.shape[0]))
        for i, j, xi, yj in self._each(x, y):
            out[i, j] = -facility_total_cost(self.instance, xi, yj)
        return out

    def grad(self, x, y):
        inst = self.instance
        x, y = np.atleast_2d(x), np.atleast_2d(y)
        out = np.empty((x.shape[0], y.shape[0], inst.facilities))
        for i, j, xi, yj in self._each(x, y):
            sol = solve_transport(inst.service_cost, _effective_capacity(inst, xi, yj), inst.demand)
            out[i, j] = -(inst.opening_cost - sol.supply_price * inst.capacity * yj)
        return out


def make_facility_problem(instance: FacilityInstance, theta: float, epsilon: float = 1e-2,
                          p=None) -> PenalizedProblem:
    """Penalized facility model on ``n`` scenario rows (``p`` defaults to one atom)."""
    if instance.failure_atoms is None:
        raise ConfigurationError("facility instance has no failure atoms")
    n = 1 if p is None else len(p)
    return PenalizedProblem(
        utility=FacilityUtility(instance),
        p=_probability(p, n, "p"),
        nu0=instance.nu0,
        y_values=instance.failure_atoms,
        theta=theta,
        decision_set=instance.decision_set,
        epsilon=epsilon,
        divergence_kind=DivergenceKind.KL,
        decision_shape=(instance.facilities,),
    )


def random_facility_instance(facilities: int, customers: int, seed: int = 0, *,
                             scenarios: int = 4, integral: bool = True) -> FacilityInstance:
    """Random desk-scale instance whose full-capacity supply covers demand."""
    rng = np.random.default_rng(seed)
    draw = (lambda lo, hi, size: rng.integers(lo, hi + 1, size=size).astype(float)) if integral \
        else (lambda lo, hi, size: rng.uniform(lo, hi, size=size))
    d = draw(1, 9, customers)
    K = draw(1, 9, facilities)
    K = K * max(1.0, math.ceil(2.0 * d.sum() / K.sum()))
    return FacilityInstance(
        opening_cost=draw(1, 5, facilities),
        capacity=K,
        demand=d,
        service_cost=draw(0, 20, (facilities, customers)),
        budget=float(facilities * 3),
        failure_atoms=rng.uniform(0.5, 1.0, size=(scenarios, facilities)),
    )


__all__ = [
    "FacilityInstance",
    "FacilityUtility",
    "HealthcareInstance",
    "INVESTMENT73",
    "InfeasibleError",
    "InvestmentInstance",
    "counterexample_instance",
    "facility_second_stage",
    "facility_total_cost",
    "investment73",
    "make_facility_problem",
    "make_healthcare_problem",
    "make_investment_problem",
    "make_pricing_kernel",
    "random_facility_instance",
    "sample_demand_atoms",
    "solve_counterexample",
    "verify_counterexample",
    "worst_case_value",
]
