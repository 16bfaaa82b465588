"""Outer max loop over decisions, penalty sweeps and constrained recovery.

The penalized problem over discrete atoms is

    J_p(theta) = max_{x in A} min_gamma  sum_ij gamma_ij U(x_i, y_j)
                 + iota(row sums == p) + theta * D(col sums, nu0).

:func:`solve_penalized` alternates an entropic inner solve (the plan
``gamma``) with a projected (sub)gradient step on ``x`` using the plan-fixed
gradient ``sum_j gamma_ij U_x(x_i, y_j)``.  The divergence of the optimal
plan's second marginal, ``eta``, is a supergradient of ``J_p`` at
``theta``; it gives the constrained value ``J_c(eta) = J_p(theta) -
theta * eta``.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional, Sequence

import numpy as np

from .divergence import DivergenceKind, DivergenceSpec, as_weights, eval_divergence
from .errors import BracketError, DimensionError, DomainError, NumericalRangeError
from .projection import DecisionSet
from .transport import ScalingConfig, entropy, regularized_objective, scaling_solve

log = logging.getLogger(__name__)


class Direction(str, enum.Enum):
    ASCENT = "ascent"
    PAPER_DESCENT = "paper_descent"


@dataclass(frozen=True)
class PenalizedProblem:
    """One instance of the discrete penalized problem.

    ``utility`` provides ``value(x, y)`` and ``grad(x, y)`` (see
    :mod:`rdro.utility`).  ``x`` atoms carry probabilities ``p``; the
    environment atoms ``y_values`` carry the nominal law ``nu0``.
    """

    utility: Any
    p: np.ndarray
    nu0: np.ndarray
    y_values: np.ndarray
    theta: float
    decision_set: DecisionSet
    epsilon: float = 1e-2
    divergence_kind: DivergenceKind = DivergenceKind.KL
    decision_shape: tuple = ()

    def __post_init__(self):
        p = np.array(as_weights(self.p), dtype=float)
        nu0 = np.array(as_weights(self.nu0), dtype=float)
        for name, w in (("p", p), ("nu0", nu0)):
            if abs(w.sum() - 1.0) > 1e-12:
                raise DomainError(f"{name} must be a probability vector")
        y = np.array(self.y_values, dtype=float)
        if y.shape[0] != nu0.shape[0]:
            raise DimensionError(f"{y.shape[0]} environment atoms for {nu0.shape[0]} weights")
        if not (self.theta >= 0 and math.isfinite(self.theta)):
            raise DomainError("theta must be finite and nonnegative")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        for a in (p, nu0, y):
            a.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "nu0", nu0)
        object.__setattr__(self, "y_values", y)
        object.__setattr__(self, "divergence_kind", DivergenceKind(self.divergence_kind))
        object.__setattr__(self, "decision_shape", tuple(self.decision_shape))

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def shape(self) -> tuple:
        return (self.n,) + self.decision_shape

    @property
    def penalty(self) -> DivergenceSpec:
        return DivergenceSpec(self.divergence_kind, self.theta)

    def with_theta(self, theta: float) -> "PenalizedProblem":
        return dataclasses.replace(self, theta=float(theta))

    def cost(self, x) -> np.ndarray:
        c = np.asarray(self.utility.value(x, self.y_values), dtype=float)
        bad = ~np.isfinite(c)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise NumericalRangeError(
                f"utility is not finite at decision atom {i} (x={np.asarray(x)[i]!r}) "
                f"and environment atom {j}")
        return c


OBJECTIVE_SLACK = 1e-10


class TraceRow(NamedTuple):
    iteration: int
    objective: float
    step_residual: float


@dataclass(frozen=True)
class OuterConfig:
    """Projected-gradient settings.

    ``direction='ascent'`` steps along ``+grad`` (the objective is concave
    and maximized); ``'paper_descent'`` uses ``x - step * grad``.  With
    ``seed`` set, the start is a random feasible point instead of the
    projection of zero.  ``backtracking`` halves the step whenever the
    plan-fixed objective gains less than its quadratic model predicts, and
    whenever the objective itself falls from one iterate to the next.
    """

    step_size: float = 0.1
    max_outer_iterations: int = 5000
    outer_tolerance: float = 1e-8
    direction: Direction = Direction.ASCENT
    seed: Optional[int] = None
    backtracking: bool = True
    record_iterates: bool = False

    def __post_init__(self):
        if not self.step_size > 0:
            raise DomainError("step_size must be positive")
        if not self.outer_tolerance > 0:
            raise DomainError("outer_tolerance must be positive")
        if self.max_outer_iterations < 1:
            raise DomainError("max_outer_iterations must be >= 1")
        object.__setattr__(self, "direction", Direction(self.direction))


@dataclass(frozen=True)
class SolveReport:
    x_star: np.ndarray
    plan: np.ndarray
    theta: float
    penalized_value: float
    eta: float
    constrained_value: float
    trace: tuple
    converged: bool
    iterations: int
    inner_iterations: int
    runtime_ms: float
    iterates: Optional[np.ndarray] = field(default=None, repr=False)


def outer_gradient(problem: PenalizedProblem, x, plan) -> np.ndarray:
    """Plan-fixed gradient ``sum_j gamma_ij U_x(x_i, y_j)``, same shape as ``x``."""
    x = np.asarray(x, dtype=float)
    plan = np.asarray(plan, dtype=float)
    if plan.shape != (x.shape[0], problem.y_values.shape[0]):
        raise DimensionError(f"plan has shape {plan.shape}")
    ux = np.asarray(problem.utility.grad(x, problem.y_values), dtype=float)
    return np.einsum("ij,ij...->i...", plan, ux)


def random_feasible_point(problem: PenalizedProblem, seed: int) -> np.ndarray:
    """Project a random point of a box scaled to the set's size."""
    rng = np.random.default_rng(seed)
    zero = problem.decision_set.project(np.zeros(problem.shape))
    probe = problem.decision_set.project(np.full(problem.shape, 1e6))
    spread = max(1.0, float(np.max(np.abs(probe))))
    raw = rng.uniform(0.0, spread, size=problem.shape)
    x = problem.decision_set.project(raw)
    return x if x.size else zero


def _plan_fixed(problem, x, plan):
    return float(np.sum(plan * problem.cost(x)))


def solve_penalized(problem: PenalizedProblem, x0=None, config: OuterConfig = OuterConfig(),
                    scaling_config: ScalingConfig = ScalingConfig()) -> SolveReport:
    """Inexact projected gradient over decisions with entropic inner plans."""
    started = time.perf_counter()
    scfg = dataclasses.replace(scaling_config, epsilon=problem.epsilon)
    spec = problem.penalty
    dset = problem.decision_set
    if x0 is None:
        x = (random_feasible_point(problem, config.seed) if config.seed is not None
             else dset.project(np.zeros(problem.shape)))
    else:
        x = dset.project(np.asarray(x0, dtype=float).reshape(problem.shape))
    sign = 1.0 if config.direction is Direction.ASCENT else -1.0
    step = config.step_size
    trace = []
    iterates = [x.copy()] if config.record_iterates else None
    log_b = None
    previous = None
    inner_total = 0
    converged = False

    for k in range(config.max_outer_iterations):
        cost = problem.cost(x)
        inner = scaling_solve(cost, problem.p, problem.nu0, spec, scfg, init_log_b=log_b)
        log_b = inner.log_b
        inner_total += inner.iterations_used
        plan = inner.plan
        objective = regularized_objective(cost, plan, problem.p, problem.nu0, spec, 0.0)
        grad = outer_gradient(problem, x, plan)
        base = float(np.sum(plan * cost))
        # the plan moves between iterates, so the plan-fixed test alone can
        # accept a step that cycles; a drop in the entropic value halves it
        smoothed = objective + problem.epsilon * entropy(plan, problem.p, problem.nu0)
        if config.backtracking and previous is not None and \
                sign * (smoothed - previous) < -OBJECTIVE_SLACK * max(1.0, abs(smoothed)):
            step *= 0.5
        previous = smoothed

        x_new = dset.project(x + sign * step * grad)
        if config.backtracking:
            # sufficient increase of the plan-fixed objective for the projected step
            for _ in range(40):
                d = x_new - x
                moved = _plan_fixed(problem, x_new, plan)
                model = sign * float(np.sum(grad * d)) - float(np.sum(d * d)) / (2.0 * step)
                if sign * (moved - base) >= model - 1e-15 * max(1.0, abs(base)):
                    break
                step *= 0.5
                x_new = dset.project(x + sign * step * grad)
        step_res = float(np.max(np.abs(x_new - x))) if x.size else 0.0
        trace.append(TraceRow(k, objective, step_res))
        x = x_new
        if iterates is not None:
            iterates.append(x.copy())
        if step_res < config.outer_tolerance:
            converged = True
            break

    cost = problem.cost(x)
    inner = scaling_solve(cost, problem.p, problem.nu0, spec, scfg, init_log_b=log_b)
    inner_total += inner.iterations_used
    plan = inner.plan
    value = regularized_objective(cost, plan, problem.p, problem.nu0, spec, 0.0)
    eta = eval_divergence(DivergenceSpec(problem.divergence_kind, 1.0), plan.sum(axis=0), problem.nu0)
    if not math.isfinite(value):
        raise NumericalRangeError("penalized objective is not finite at the final iterate")
    if not converged:
        log.info("outer loop hit the cap of %d iterations", config.max_outer_iterations)
    return SolveReport(
        x_star=x,
        plan=plan,
        theta=problem.theta,
        penalized_value=value,
        eta=eta,
        constrained_value=value - problem.theta * eta,
        trace=tuple(trace),
        converged=converged,
        iterations=len(trace),
        inner_iterations=inner_total,
        runtime_ms=1e3 * (time.perf_counter() - started),
        iterates=np.array(iterates) if iterates is not None else None,
    )


def _solve_one(args):
    problem, x0, config, scaling_config = args
    return solve_penalized(problem, x0, config, scaling_config)


def theta_sweep(problem_template: PenalizedProblem, thetas: Sequence[float],
                config: OuterConfig = OuterConfig(),
                scaling_config: ScalingConfig = ScalingConfig(), *,
                x0=None, max_workers: int = 1) -> list[SolveReport]:
    """Independent penalized solves, one per ``theta`` (strictly increasing).

    With ``max_workers > 1`` the solves run in worker processes, which
    requires a picklable utility.
    """
    thetas = [float(t) for t in thetas]
    if not thetas:
        raise DomainError("theta grid is empty")
    if any(b <= a for a, b in zip(thetas, thetas[1:])):
        raise DomainError("theta grid must be strictly increasing")
    if any(t < 0 for t in thetas):
        raise DomainError("theta values must be nonnegative")
    jobs = [(problem_template.with_theta(t), x0, config, scaling_config) for t in thetas]
    if max_workers <= 1 or len(jobs) == 1:
        return [_solve_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_solve_one, jobs))


def cross_duality_violations(reports: Sequence[SolveReport]) -> np.ndarray:
    """Matrix ``V[a, b] = J_p(theta_a) - (J_c(eta_b) + theta_a * eta_b)``.

    Duality requires ``J_p(theta) = min_eta {J_c(eta) + theta * eta}``, so
    every entry should be <= 0 up to solver accuracy; the diagonal is zero
    by construction.
    """
    jp = np.array([r.penalized_value for r in reports])
    th = np.array([r.theta for r in reports])
    et = np.array([r.eta for r in reports])
    jc = np.array([r.constrained_value for r in reports])
    return jp[:, None] - (jc[None, :] + th[:, None] * et[None, :])


def solve_constrained(problem_template: PenalizedProblem, eta_target: float,
                      theta_bracket: tuple[float, float],
                      config: OuterConfig = OuterConfig(),
                      scaling_config: ScalingConfig = ScalingConfig(), *,
                      dual_tolerance: float = 1e-6, max_bisections: int = 60,
                      bracket_tolerance: float = 1e-10) -> SolveReport:
    """Recover the constrained problem at ``eta_target`` by bisection on theta.

    ``eta(theta)`` is nonincreasing, so the bracket must satisfy
    ``eta(low) >= eta_target >= eta(high)``.  Bisection runs on
    ``log(theta)`` until ``|eta - eta_target| <= dual_tolerance`` or the
    relative bracket width drops below ``bracket_tolerance``.
    """
    lo, hi = (float(v) for v in theta_bracket)
    if not (0 < lo < hi):
        raise BracketError(f"bracket must satisfy 0 < low < high, got {theta_bracket}")
    if eta_target < 0:
        raise DomainError("eta_target must be nonnegative")

    def solve(theta, start):
        return solve_penalized(problem_template.with_theta(theta), start, config, scaling_config)

    rep_lo = solve(lo, None)
    rep_hi = solve(hi, rep_lo.x_star)
    if not (rep_lo.eta + dual_tolerance >= eta_target >= rep_hi.eta - dual_tolerance):
        raise BracketError(
            f"eta({lo:g}) = {rep_lo.eta:.6g} and eta({hi:g}) = {rep_hi.eta:.6g} "
            f"do not straddle eta_target = {eta_target:.6g}")
    best = min((rep_lo, rep_hi), key=lambda r: abs(r.eta - eta_target))
    for _ in range(max_bisections):
        if abs(best.eta - eta_target) <= dual_tolerance:
            break
        if math.log(hi / lo) <= bracket_tolerance:
            break
        mid = math.sqrt(lo * hi)
        rep = solve(mid, best.x_star)
        if rep.eta > eta_target:
            lo = mid
        else:
            hi = mid
        if abs(rep.eta - eta_target) <= abs(best.eta - eta_target):
            best = rep
    return best


@dataclass(frozen=True)
class ConvergenceDiagnostics:
    """Geometric envelope ``amplitude * rate**k + floor`` of a residual series.

    ``fitted_rate`` is the per-iteration contraction factor (the ``1 - r`` of
    a linear-convergence bound) from a least-squares fit of
    ``log(residual - floor)`` on the pre-plateau segment.
    """

    fitted_rate: float
    fitted_floor: float
    amplitude: float
    plateau_start: int
    residual_series: np.ndarray

    def envelope(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return self.amplitude * self.fitted_rate ** k + self.fitted_floor


PLATEAU_FACTOR = 1.2
MIN_PLATEAU = 3


def fit_convergence(residual_series) -> ConvergenceDiagnostics:
    """Fit a linear-convergence envelope to ``||x_k - x*||``.

    The plateau is the longest tail (at least three points) whose values
    stay within a factor 1.2 of the last residual.  The rate is the
    least-squares slope of ``log(residual - level)`` before the plateau,
    where ``level`` is the smallest plateau value; the reported floor is
    the largest one.  The amplitude is the smallest that keeps the envelope
    above every residual.  A series without a plateau gets floor 0.
    """
    res = np.asarray(residual_series, dtype=float)
    if res.ndim != 1 or res.size < 10:
        raise DomainError("need a residual series of length >= 10")
    if np.any(res < 0) or not np.all(np.isfinite(res)):
        raise DomainError("residuals must be finite and nonnegative")
    increases = np.diff(res) > 1e-12 * max(1.0, res[0])
    if increases.sum() > 0.1 * res.size:
        warnings.warn("residual series is far from monotone", RuntimeWarning, stacklevel=2)

    last = res[-1]
    within = (res <= PLATEAU_FACTOR * last) & (res >= last / PLATEAU_FACTOR)
    start = res.size - 1
    while start > 0 and within[start - 1]:
        start -= 1
    if res.size - start < MIN_PLATEAU:
        start, level, floor = res.size, 0.0, 0.0
    else:
        level, floor = float(res[start:].min()), float(res[start:].max())

    k = np.arange(start)
    excess = res[:start] - level
    keep = excess > 0
    if keep.sum() >= 2:
        slope, _ = np.polyfit(k[keep], np.log(excess[keep]), 1)
        rate = float(np.exp(slope))
    else:
        rate = 0.5
    rate = min(max(rate, np.finfo(float).tiny), 1.0 - 1e-12)
    above = res[:start] - floor
    amplitude = float(np.max(above / rate ** k, initial=0.0)) if start else 0.0
    amplitude *= 1.0 + 1e-12      # keep the touching point above after rounding
    return ConvergenceDiagnostics(rate, floor, amplitude, int(start), res)
