"""Discrete measures, phi-divergences and their proximal scaling operators.

Every divergence is represented by a :class:`DivergenceSpec` holding the
entropy function ``phi`` (through its kind) and a nonnegative multiplier, so
``DivergenceSpec(KL, scale=theta)`` stands for ``theta * KL``.  Measures are
finite nonnegative vectors; the singular part of ``mu`` with respect to
``nu`` is the mass ``mu`` puts on atoms where ``nu`` vanishes and is priced
with the recession constant of ``phi``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, DomainError

PROBABILITY_ATOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative weights on a finite support.

    ``labels`` optionally carries the support points (scalars or vectors).
    With ``probability=True`` the weights must sum to one within 1e-12.
    """

    weights: np.ndarray
    labels: Optional[np.ndarray] = None
    probability: bool = False

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise DomainError("measure weights must be finite")
        if np.any(w < 0):
            raise DomainError("measure weights must be nonnegative")
        if self.probability and abs(w.sum() - 1.0) > PROBABILITY_ATOL:
            raise DomainError(f"probability weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=float)
            if labels.shape[0] != w.shape[0]:
                raise DimensionError(
                    f"{labels.shape[0]} labels for {w.shape[0]} weights")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def uniform(cls, n: int, labels=None) -> "DiscreteMeasure":
        return cls(np.full(n, 1.0 / n), labels=labels, probability=True)


MeasureLike = Union[DiscreteMeasure, Sequence[float], np.ndarray]


def as_weights(measure: MeasureLike) -> np.ndarray:
    """Return the weight vector of a measure or of a raw array."""
    if isinstance(measure, DiscreteMeasure):
        return measure.weights
    w = np.asarray(measure, dtype=float).reshape(-1)
    if np.any(w < 0):
        raise DomainError("measure weights must be nonnegative")
    return w


class DivergenceKind(str, enum.Enum):
    KL = "kl"
    EQUALITY = "equality"
    CHI_SQUARED = "chi_squared"
    TOTAL_VARIATION = "total_variation"


class ProxdivVariant(str, enum.Enum):
    """Form of the KL proxdiv operator.

    ``STANDARD`` is ``(q/s)**(lam/(lam+eps))``.  ``PAPER_FACTORED`` multiplies
    it by ``exp(-eps/(lam+eps))``.
    """

    STANDARD = "standard"
    PAPER_FACTORED = "paper_factored"


@dataclass(frozen=True)
class DivergenceSpec:
    """A scaled phi-divergence ``scale * D_phi``."""

    kind: DivergenceKind
    scale: float = 1.0
    variant: ProxdivVariant = field(default=ProxdivVariant.STANDARD)

    def __post_init__(self):
        object.__setattr__(self, "kind", DivergenceKind(self.kind))
        object.__setattr__(self, "variant", ProxdivVariant(self.variant))
        if not (self.scale >= 0 and math.isfinite(self.scale)):
            raise DomainError(f"divergence scale must be finite and >= 0, got {self.scale}")

    @property
    def recession(self) -> float:
        """Growth rate ``lim phi(s)/s`` of the unscaled entropy function."""
        if self.kind is DivergenceKind.TOTAL_VARIATION:
            return 1.0
        return math.inf

    def phi(self, s) -> np.ndarray:
        """Unscaled entropy function evaluated componentwise on ``s >= 0``."""
        s = np.asarray(s, dtype=float)
        if self.kind is DivergenceKind.KL:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)) - s + 1.0, 1.0)
            return out
        if self.kind is DivergenceKind.EQUALITY:
            return np.where(s == 1.0, 0.0, np.inf)
        if self.kind is DivergenceKind.CHI_SQUARED:
            return (s - 1.0) ** 2
        return np.abs(s - 1.0)


def kl(scale: float = 1.0, variant=ProxdivVariant.STANDARD) -> DivergenceSpec:
    return DivergenceSpec(DivergenceKind.KL, scale, variant)


def equality() -> DivergenceSpec:
    return DivergenceSpec(DivergenceKind.EQUALITY)


def _check_pair(mu, nu):
    mu, nu = as_weights(mu), as_weights(nu)
    if mu.shape != nu.shape:
        raise DimensionError(f"measures have lengths {mu.shape[0]} and {nu.shape[0]}")
    return mu, nu


def eval_divergence(spec: DivergenceSpec, mu: MeasureLike, nu: MeasureLike,
                    *, atol: float = 0.0) -> float:
    """Discrete phi-divergence ``scale * D_phi(mu, nu)``.

    ``sum_{nu_j > 0} nu_j phi(mu_j / nu_j) + phi'_inf * sum_{nu_j = 0} mu_j``
    with ``0 * inf = 0``.  For the equality indicator, ``atol`` is the
    largest componentwise difference still treated as ``mu == nu``.
    """
    mu, nu = _check_pair(mu, nu)
    if spec.scale == 0.0:
        return 0.0
    if spec.kind is DivergenceKind.EQUALITY:
        return 0.0 if np.all(np.abs(mu - nu) <= atol) else math.inf

    support = nu > 0
    ratio = mu[support] / nu[support]
    absolutely_continuous = float(np.sum(nu[support] * spec.phi(ratio)))
    singular_mass = float(mu[~support].sum())
    singular = spec.recession * singular_mass if singular_mass > 0 else 0.0
    return spec.scale * (absolutely_continuous + singular)


def _chi2_prox_log(log_s, q, lam, eps):
    """Solve ``(2 lam / (eps q)) (e^y - q) + y - log s = 0`` for ``y``.

    The left side is convex and increasing in ``y``, so Newton started to
    the right of the root decreases monotonically onto it.
    """
    c = 2.0 * lam / (eps * q)
    y = np.maximum(log_s, np.log(q))
    for _ in range(100):
        ey = np.exp(y)
        h = c * (ey - q) + y - log_s
        step = h / (c * ey + 1.0)
        y = y - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(y))):
            break
    return y


def log_proxdiv_operator(spec: DivergenceSpec, reference: MeasureLike, epsilon: float):
    """Return ``log_s -> log proxdiv(spec, exp(log_s), reference, epsilon)``.

    The reference-dependent parts are computed once, which matters inside
    scaling loops that apply the operator thousands of times.
    """
    q = as_weights(reference)
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    lam = spec.scale
    with np.errstate(divide="ignore"):
        log_q = np.log(q)

    def checked(op):
        def apply(log_s):
            if log_s.shape != q.shape:
                raise DimensionError(f"reference has length {q.shape[0]}, argument {log_s.shape[0]}")
            return op(log_s)
        return apply

    if lam == 0.0:
        return checked(np.zeros_like)
    if spec.kind is DivergenceKind.EQUALITY:
        return checked(lambda log_s: log_q - log_s)
    if spec.kind is DivergenceKind.KL:
        kappa = lam / (lam + epsilon)
        offset = epsilon / (lam + epsilon) if spec.variant is ProxdivVariant.PAPER_FACTORED else 0.0
        return checked(lambda log_s: kappa * (log_q - log_s) - offset)
    if spec.kind is DivergenceKind.TOTAL_VARIATION:
        bound = lam / epsilon
        return checked(lambda log_s: np.clip(log_q - log_s, -bound, bound))
    if np.any(q <= 0):
        raise DomainError("chi-squared proxdiv needs a strictly positive reference")
    return checked(lambda log_s: _chi2_prox_log(log_s, q, lam, epsilon) - log_s)


def log_proxdiv(spec: DivergenceSpec, log_s: np.ndarray, reference: MeasureLike,
                epsilon: float) -> np.ndarray:
    """Logarithm of :func:`proxdiv`, evaluated from ``log s``.

    Working with logarithms keeps the scaling iterations finite for
    regularization parameters far below the spread of the cost.
    """
    log_s = np.asarray(log_s, dtype=float)
    return log_proxdiv_operator(spec, reference, epsilon)(log_s)


def proxdiv(spec: DivergenceSpec, s: np.ndarray, reference: MeasureLike,
            epsilon: float) -> np.ndarray:
    """Scaling update ``prox^KL_{F/eps}(s) / s`` for the marginal term ``F``.

    For the equality indicator this is ``reference / s``; for ``lam * KL`` it
    is ``(reference / s) ** (lam / (lam + eps))``.
    """
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError("proxdiv needs a strictly positive argument")
    return np.exp(log_proxdiv(spec, np.log(s), reference, epsilon))


def marginals(gamma) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Row sums and column sums of a coupling matrix."""
    g = np.asarray(gamma, dtype=float)
    if g.ndim != 2:
        raise DimensionError("a coupling must be a 2-D array")
    if np.any(g < 0):
        raise DomainError("a coupling must be nonnegative")
    return DiscreteMeasure(g.sum(axis=1)), DiscreteMeasure(g.sum(axis=0))
