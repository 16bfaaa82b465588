"""Convex decision sets and Euclidean projections onto them.

Each set exposes ``project(x)`` (the nearest feasible point) and
``residual(x)`` (largest constraint violation, 0 when feasible).  The
projections solve the KKT system of the single coupling constraint by
bisection on its multiplier and then recompute the multiplier in closed
form on the identified active set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError, DimensionError

BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BudgetOrthant:
    """``{x >= 0 : sum_i w_i x_i <= budget}`` with strictly positive ``w``.

    For the investment problem ``w_i = p_i m_i`` (probability times pricing
    kernel) and ``budget`` is the initial wealth.
    """

    weights: np.ndarray
    budget: float

    def __post_init__(self):
        w = _frozen(self.weights).reshape(-1)
        if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
            raise ConfigurationError("budget weights must be finite and strictly positive")
        if not self.budget >= 0:
            raise ConfigurationError("budget must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"x has shape {x.shape}, set has dimension {self.dim}")
        return x

    def residual(self, x) -> float:
        x = self._check(x)
        return max(0.0, float(-x.min()), float(self.weights @ x - self.budget))

    def project(self, x) -> np.ndarray:
        x = self._check(x)
        if self.budget == 0:
            return np.zeros_like(x)
        clipped = np.maximum(x, 0.0)
        if self.weights @ clipped <= self.budget:
            return clipped

        scale = self.weights.max()
        w = self.weights / scale
        budget = self.budget / scale

        def spend(t):
            return w @ np.maximum(x - t * w, 0.0)

        lo, hi = 0.0, float(np.max(x / w))
        for _ in range(BISECTION_MAX_ITER):
            mid = 0.5 * (lo + hi)
            if spend(mid) > budget:
                lo = mid
            else:
                hi = mid
            if hi - lo <= BISECTION_TOL * max(1.0, hi):
                break
        active = x - hi * w > 0
        if active.any():
            t = (w[active] @ x[active] - budget) / (w[active] @ w[active])
            if np.array_equal(x - t * w > 0, active):
                hi = t
        out = np.maximum(x - hi * w, 0.0)
        # guard against the last ulp pushing the budget over
        excess = self.weights @ out - self.budget
        if excess > 0:
            out *= self.budget / (self.weights @ out)
        return out


def _box_budget_rows(z, upper, weights, capacity):
    """Row-wise projection of ``z`` (k, d) onto ``{0<=x<=u, w.x <= C}``."""
    clipped = np.clip(z, 0.0, upper)
    over = clipped @ weights > capacity
    if not over.any():
        return clipped
    zz = z[over]
    lo = np.zeros(zz.shape[0])
    hi = np.max(zz / weights, axis=1)
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        spend = np.clip(zz - mid[:, None] * weights, 0.0, upper) @ weights
        big = spend > capacity
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
        if np.all(hi - lo <= BISECTION_TOL * np.maximum(1.0, hi)):
            break
    t = hi
    # closed-form multiplier on the active set of each row
    moved = zz - t[:, None] * weights
    free = (moved > 0) & (moved < upper)
    at_top = moved >= upper
    num = (np.where(free, zz * weights, 0.0).sum(axis=1)
           + np.where(at_top, np.broadcast_to(upper * weights, zz.shape), 0.0).sum(axis=1)
           - capacity)
    den = np.where(free, weights ** 2, 0.0).sum(axis=1)
    has_free = den > 0
    t_exact = np.where(has_free, num / np.where(has_free, den, 1.0), t)
    cand = zz - t_exact[:, None] * weights
    same = np.all(((cand > 0) & (cand < upper)) == free, axis=1)
    t = np.where(has_free & same, t_exact, t)
    rows = np.clip(zz - t[:, None] * weights, 0.0, upper)
    spend = rows @ weights
    shrink = spend > capacity
    if shrink.any():
        rows[shrink] *= (capacity / spend[shrink])[:, None]
    clipped[over] = rows
    return clipped


@dataclass(frozen=True)
class BoxBudget:
    """``{0 <= x_i <= u_i : sum_i w_i x_i <= capacity}``.

    ``weights`` defaults to all ones.  A 2-D input is projected row by row,
    each row being one decision atom.
    """

    upper: np.ndarray
    capacity: float
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        u = _frozen(self.upper).reshape(-1)
        if np.any(u < 0) or np.any(np.isnan(u)):
            raise ConfigurationError("upper bounds must be nonnegative")
        if not self.capacity >= 0:
            raise ConfigurationError("capacity must be nonnegative")
        w = np.ones_like(u) if self.weights is None else np.array(self.weights, dtype=float).reshape(-1)
        if w.shape != u.shape or np.any(~(w > 0)):
            raise ConfigurationError("weights must be strictly positive, one per coordinate")
        w.setflags(write=False)
        object.__setattr__(self, "upper", u)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.upper.shape[0]

    def _rows(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim or x.ndim not in (1, 2):
            raise DimensionError(f"x has shape {x.shape}, set has dimension {self.dim}")
        return np.atleast_2d(x)

    def residual(self, x) -> float:
        rows = self._rows(x)
        viol = [0.0, float(-rows.min()), float(np.max(rows - self.upper)),
                float(np.max(rows @ self.weights - self.capacity))]
        return max(viol)

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = _box_budget_rows(self._rows(x), self.upper, self.weights, self.capacity)
        return out.reshape(x.shape)


@dataclass(frozen=True)
class CoverageSimplex:
    """Per-atom allocations with a minimum expected total.

    Each row ``x_i`` (one scenario atom) lies in ``{0 <= x_i <= u,
    sum(x_i) <= capacity}`` and ``sum_i p_i sum(x_i) >= coverage * capacity``.
    """

    upper: np.ndarray
    capacity: float
    coverage: float
    p: np.ndarray

    def __post_init__(self):
        box = BoxBudget(self.upper, self.capacity)
        object.__setattr__(self, "upper", box.upper)
        p = _frozen(self.p).reshape(-1)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigurationError("p must be a probability vector")
        object.__setattr__(self, "p", p)
        if not 0.0 <= self.coverage <= 1.0:
            raise ConfigurationError("coverage must lie in [0, 1]")
        row_max = min(self.capacity, float(box.upper.sum()))
        if self.coverage * self.capacity > row_max * (1 + 1e-12):
            raise ConfigurationError(
                f"coverage {self.coverage} * capacity {self.capacity} exceeds the largest "
                f"feasible row total {row_max}; the set is empty")

    @property
    def _box(self):
        return BoxBudget(self.upper, self.capacity)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p.shape[0], self.upper.shape[0]):
            raise DimensionError(
                f"x has shape {x.shape}, expected {(self.p.shape[0], self.upper.shape[0])}")
        return x

    def expected_total(self, x) -> float:
        return float(self.p @ self._check(x).sum(axis=1))

    def residual(self, x) -> float:
        x = self._check(x)
        return max(self._box.residual(x), self.coverage * self.capacity - self.expected_total(x))

    def project(self, x) -> np.ndarray:
        x = self._check(x)
        box = self._box
        target = self.coverage * self.capacity
        first = box.project(x)
        if self.expected_total(first) >= target:
            return first

        def total(s):
            return self.expected_total(box.project(x + s * self.p[:, None]))

        lo, hi = 0.0, 1.0
        while total(hi) < target:
            lo, hi = hi, 2.0 * hi
            if hi > 1e300:
                raise ConfigurationError("coverage constraint cannot be met")
        for _ in range(BISECTION_MAX_ITER):
            mid = 0.5 * (lo + hi)
            if total(mid) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= BISECTION_TOL * max(1.0, hi):
                break
        return box.project(x + hi * self.p[:, None])


DecisionSet = Union[BudgetOrthant, BoxBudget, CoverageSimplex]


def project(decision_set: DecisionSet, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``decision_set``."""
    return decision_set.project(x)


def feasibility_residual(decision_set: DecisionSet, x) -> float:
    """Largest constraint violation of ``x``; zero iff ``x`` is feasible."""
    return decision_set.residual(x)
