"""Entropic scaling solver for the inner infimum of the penalized problem.

The inner problem for a fixed decision vector is

    min_{gamma >= 0}  <C, gamma> + iota(row sums == p) + F2(column sums)

where ``C[i, j] = U(x_i, y_j)`` and ``F2`` is a scaled divergence to
``nu0``.  Adding ``eps * KL(gamma | p x nu0)`` makes it strictly convex and
solvable by alternating the two proxdiv updates.  The kernel carries the
reference product, ``K = p nu0^T * exp(-C / eps)``, so the plan is exactly
``diag(a) K diag(b)``.

All iterations run on log-scalings, which keeps them finite however small
``eps`` is compared to the spread of ``C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .divergence import (
    DivergenceKind,
    DivergenceSpec,
    ProxdivVariant,
    as_weights,
    equality,
    eval_divergence,
    kl,
    log_proxdiv_operator,
)
from .errors import CapacityError, DimensionError, DomainError, NumericalRangeError

MARGINAL_ATOL = 1e-9


@dataclass(frozen=True)
class ScalingConfig:
    """Parameters of the scaling iterations.

    ``tolerance`` bounds the change of ``log b`` between sweeps, measured up
    to a common additive constant (the plan does not depend on that
    constant).  ``log_domain=False`` runs the multiplicative form on a
    row-shifted kernel instead.

    With ``epsilon_scaling`` the solve first runs on a decreasing sequence
    ``eps_k = spread / 10**k`` (``spread`` is the range of the cost) and
    carries the dual potential ``eps * log b`` from one stage to the next;
    only the last stage runs at ``epsilon``.  This shortens the slow regime
    of small ``epsilon`` considerably.  ``max_iterations`` caps every stage.
    """

    epsilon: float = 1e-2
    max_iterations: int = 10_000
    tolerance: float = 1e-9
    proxdiv_variant: ProxdivVariant = ProxdivVariant.STANDARD
    log_domain: bool = True
    epsilon_scaling: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not self.tolerance > 0:
            raise DomainError("tolerance must be positive")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        object.__setattr__(self, "proxdiv_variant", ProxdivVariant(self.proxdiv_variant))


@dataclass(frozen=True)
class ScalingReport:
    plan: np.ndarray
    log_a: np.ndarray
    log_b: np.ndarray
    log_kernel: np.ndarray
    iterations_used: int
    primal_value: float
    residual: float
    converged: bool

    @property
    def scalings(self) -> tuple[np.ndarray, np.ndarray]:
        with np.errstate(over="ignore"):
            return np.exp(self.log_a), np.exp(self.log_b)

    @property
    def kernel(self) -> np.ndarray:
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(self.log_kernel)


def _lse_rows(m):
    return np.logaddexp.reduce(m, axis=1)


def _lse_cols(m):
    return np.logaddexp.reduce(m, axis=0)


def _as_cost(cost, n, r):
    c = np.asarray(cost, dtype=float)
    if c.shape != (n, r):
        raise DimensionError(f"cost has shape {c.shape}, expected {(n, r)}")
    if not np.all(np.isfinite(c)):
        i, j = np.argwhere(~np.isfinite(c))[0]
        raise NumericalRangeError(f"cost entry ({i}, {j}) is not finite")
    return c


def entropy(gamma, p, nu0) -> float:
    """``KL(gamma | p x nu0)`` in its unnormalized form."""
    g = np.asarray(gamma, dtype=float)
    ref = np.outer(as_weights(p), as_weights(nu0))
    pos = g > 0
    if np.any(ref[pos] <= 0):
        return math.inf
    return float(np.sum(g[pos] * (np.log(g[pos] / ref[pos]) - 1.0)) + ref.sum())


def regularized_objective(cost, gamma, p, nu0, second_marginal_divergence: DivergenceSpec,
                          epsilon: float = 0.0, *, marginal_atol: float = MARGINAL_ATOL) -> float:
    """Inner objective ``<C, gamma> + D_eq(row sums, p) + F2(col sums) + eps H``.

    With ``epsilon=0`` this is the unregularized objective.  Row sums farther
    than ``marginal_atol`` from ``p`` make the value ``+inf``.
    """
    p, nu0 = as_weights(p), as_weights(nu0)
    g = np.asarray(gamma, dtype=float)
    c = _as_cost(cost, p.shape[0], nu0.shape[0])
    if g.shape != c.shape:
        raise DimensionError(f"plan has shape {g.shape}, cost {c.shape}")
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    first = eval_divergence(equality(), g.sum(axis=1), p, atol=marginal_atol)
    if math.isinf(first):
        return math.inf
    value = float(np.sum(g * c)) + eval_divergence(second_marginal_divergence, g.sum(axis=0), nu0)
    if epsilon > 0:
        value += epsilon * entropy(g, p, nu0)
    return value


def _residual(delta):
    # change of log b modulo a common constant
    return 0.5 * float(delta.max() - delta.min()) if delta.size else 0.0


def _sweeps(c, p_, nu_, spec, eps, config, g, tol, on_sweep):
    """Run the alternating updates at one ``eps`` from column scaling ``g``.

    Returns ``(log a, log b, log K, sweeps, residual, converged)`` with the
    final ``log a`` recomputed from the final ``log b``.
    """
    log_p, log_nu = np.log(p_), np.log(nu_)
    log_k = log_p[:, None] + log_nu[None, :] - c / eps
    prox = log_proxdiv_operator(spec, nu_, eps)

    if config.log_domain:
        def a_step(g):
            return log_p - _lse_rows(log_k + g[None, :])

        def b_step(f):
            return prox(_lse_cols(log_k + f[:, None]))
    else:
        shift = c.min(axis=1)
        kern = np.exp(log_k + shift[:, None] / eps)

        def a_step(g):
            b = np.exp(g)
            s = kern @ b
            if not np.all(np.isfinite(s)) or np.any(s <= 0):
                raise NumericalRangeError(
                    f"kernel row sums left the float range at epsilon={eps:g}; "
                    "use the log-domain iterations")
            return np.log(p_ / s) + shift / eps

        def b_step(f):
            a = np.exp(f - shift / eps)
            s = kern.T @ a
            if not np.all(np.isfinite(s)) or np.any(s <= 0):
                raise NumericalRangeError(
                    f"kernel column sums left the float range at epsilon={eps:g}; "
                    "use the log-domain iterations")
            return prox(np.log(s))

    residual = math.inf
    used = 0
    converged = False
    for used in range(1, config.max_iterations + 1):
        f = a_step(g)
        g_new = b_step(f)
        if not np.all(np.isfinite(g_new)):
            raise NumericalRangeError("column scaling became non-finite")
        residual = _residual(g_new - g)
        g = g_new
        if on_sweep is not None:
            on_sweep(used, a_step(g), g, log_k)
        if residual < tol:
            converged = True
            break
    # close on the equality marginal so the plan's row sums equal p
    return a_step(g), g, log_k, used, residual, converged


def scaling_solve(cost, p, nu0, second_marginal_divergence: DivergenceSpec,
                  config: ScalingConfig = ScalingConfig(), *,
                  init_log_b: Optional[np.ndarray] = None,
                  callback: Optional[Callable[[int, np.ndarray], None]] = None) -> ScalingReport:
    """Alternate the proxdiv updates of the two marginals.

    The first marginal is pinned to ``p``.  ``init_log_b`` warm-starts the
    column scaling (e.g. from the previous outer iterate).  If given,
    ``callback(l, plan)`` sees the plan after every sweep ``l``.

    Atoms with zero mass in ``p`` or ``nu0`` are removed before the solve and
    come back as zero rows/columns of the plan.
    """
    p_full, nu_full = as_weights(p), as_weights(nu0)
    n_full, r_full = p_full.shape[0], nu_full.shape[0]
    c_full = _as_cost(cost, n_full, r_full)
    eps = config.epsilon
    spec = second_marginal_divergence
    if spec.kind is DivergenceKind.KL and spec.variant is not config.proxdiv_variant:
        spec = kl(spec.scale, config.proxdiv_variant)

    rows = np.flatnonzero(p_full > 0)
    cols = np.flatnonzero(nu_full > 0)
    if rows.size == 0 or cols.size == 0:
        raise DomainError("p and nu0 need positive mass")
    p_, nu_ = p_full[rows], nu_full[cols]
    c = c_full[np.ix_(rows, cols)]

    g = np.zeros(cols.size)
    if init_log_b is not None:
        g0 = np.asarray(init_log_b, dtype=float)
        if g0.shape != (r_full,):
            raise DimensionError("init_log_b has the wrong length")
        g = np.where(np.isfinite(g0[cols]), g0[cols], 0.0)

    def report(l, f, g, log_k):
        callback(l, _embed(np.exp(f[:, None] + log_k + g[None, :]), rows, cols, n_full, r_full))

    stages = [eps]
    if config.epsilon_scaling and init_log_b is None:
        # a warm start already sits near the answer, so only cold starts anneal
        top = float(c.max() - c.min())
        while top > 10.0 * eps:
            stages.insert(-1, top)
            top /= 10.0
    used_total = 0
    for k, stage_eps in enumerate(stages):
        if k > 0:
            g = g * stages[k - 1] / stage_eps
        last = k == len(stages) - 1
        tol = config.tolerance if last else max(config.tolerance, 1e-6)
        on_sweep = None
        if callback is not None:
            def on_sweep(l, f, g, log_k, offset=used_total):
                report(offset + l, f, g, log_k)
        f, g, log_k, used, residual, converged = _sweeps(
            c, p_, nu_, spec, stage_eps, config, g, tol, on_sweep)
        used_total += used
    used = used_total

    plan = np.exp(f[:, None] + log_k + g[None, :])
    if not np.all(np.isfinite(plan)):
        raise NumericalRangeError("transport plan is not finite")

    log_a = np.full(n_full, -np.inf)
    log_a[rows] = f
    log_b = np.full(r_full, -np.inf)
    log_b[cols] = g
    log_kernel = np.full((n_full, r_full), -np.inf)
    log_kernel[np.ix_(rows, cols)] = log_k
    full_plan = _embed(plan, rows, cols, n_full, r_full)
    primal = regularized_objective(c_full, full_plan, p_full, nu_full, spec, eps)
    return ScalingReport(full_plan, log_a, log_b, log_kernel, used, primal, residual, converged)


def _embed(block, rows, cols, n, r):
    if block.shape == (n, r):
        return block
    out = np.zeros((n, r))
    out[np.ix_(rows, cols)] = block
    return out


def inner_value(cost, p, nu0, theta: float, config: ScalingConfig = ScalingConfig(),
                *, divergence: Optional[DivergenceSpec] = None,
                init_log_b=None) -> tuple[float, np.ndarray]:
    """Unregularized inner objective evaluated at the entropic plan.

    The penalty is ``theta * KL`` unless another ``divergence`` is given.
    """
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    spec = divergence if divergence is not None else kl(theta, config.proxdiv_variant)
    report = scaling_solve(cost, p, nu0, spec, config, init_log_b=init_log_b)
    value = regularized_objective(cost, report.plan, p, nu0, spec, 0.0)
    return value, report.plan


ORACLE_MAX_POINTS = 20_000_000
REFINE_POINTS = 200_000


def _row_candidates(center, half_width, steps):
    """Grid points of the (r-1)-simplex box around ``center``."""
    axes = [np.linspace(max(0.0, c - half_width), min(1.0, c + half_width), steps + 1)
            for c in center]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(center))
    mesh = mesh[mesh.sum(axis=1) <= 1.0 + 1e-12]
    last = np.clip(1.0 - mesh.sum(axis=1, keepdims=True), 0.0, None)
    return np.hstack([mesh, last])


def oracle_inner(cost, p, nu0, theta: float, grid_resolution: int = 400, *,
                 refinements: int = 2,
                 divergence: Optional[DivergenceSpec] = None) -> tuple[float, np.ndarray]:
    """Exhaustive grid search over couplings with row sums exactly ``p``.

    Row ``i`` of the plan is ``p_i * w`` with ``w`` on a grid of the
    probability simplex.  After the global grid, ``refinements`` rounds
    re-grid a box of two cells around the incumbent.  Only for ``n, r <= 3``.
    """
    p, nu0 = as_weights(p), as_weights(nu0)
    n, r = p.shape[0], nu0.shape[0]
    c = _as_cost(cost, n, r)
    if n > 3 or r > 3:
        raise CapacityError(f"oracle_inner handles at most 3x3 instances, got {n}x{r}")
    spec = divergence if divergence is not None else kl(theta)
    if r == 1:
        plan = p[:, None].copy()
        return regularized_objective(c, plan, p, nu0, spec), plan

    def search(candidates):
        total = math.prod(len(cand) for cand in candidates)
        if total > ORACLE_MAX_POINTS:
            raise CapacityError(f"grid has {total} points; lower grid_resolution")
        linear = 0.0
        column = 0.0
        for i, cand in enumerate(candidates):
            shape = [1] * n
            shape[i] = len(cand)
            rows = p[i] * cand                           # (k_i, r)
            linear = linear + (rows @ c[i]).reshape(shape)
            column = column + rows.reshape(shape + [r])
        flat_cols = column.reshape(-1, r)
        if spec.kind is DivergenceKind.KL and np.all(nu0 > 0):
            pen = _kl_rows(spec.scale, flat_cols, nu0)
        else:
            pen = np.array([eval_divergence(spec, col, nu0) for col in flat_cols])
        values = np.broadcast_to(linear, column.shape[:-1]).reshape(-1) + pen
        best = int(np.argmin(values))
        idx = np.unravel_index(best, column.shape[:-1])
        plan = np.stack([p[i] * candidates[i][idx[i]] for i in range(n)])
        return float(values[best]), plan

    per_row = _row_candidates([0.5] * (r - 1), 0.5, grid_resolution)
    value, plan = search([per_row] * n)
    width = 1.0 / grid_resolution
    for _ in range(refinements):
        centers = [plan[i, :-1] / p[i] if p[i] > 0 else np.zeros(r - 1) for i in range(n)]
        steps = max(4, int(REFINE_POINTS ** (1.0 / (n * (r - 1)))) - 1)
        cands = [_row_candidates(ctr, 2 * width, steps) for ctr in centers]
        new_value, new_plan = search(cands)
        if new_value <= value:
            value, plan = new_value, new_plan
        width = 4 * width / steps
    return value, plan


def _kl_rows(scale, cols, nu0):
    if scale == 0:
        return np.zeros(cols.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = cols / nu0[None, :]
        phi = np.where(ratio > 0, ratio * np.log(np.where(ratio > 0, ratio, 1.0)) - ratio + 1.0, 1.0)
    return scale * np.sum(nu0[None, :] * phi, axis=1)


__all__ = [
    "ScalingConfig",
    "ScalingReport",
    "entropy",
    "inner_value",
    "oracle_inner",
    "regularized_objective",
    "scaling_solve",
]
