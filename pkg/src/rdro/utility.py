"""Bivariate utilities ``U(x, y)`` evaluated on all atom pairs.

``value(x, y)`` takes decision atoms ``x`` of shape ``(n,)`` or ``(n, m)``
and environment atoms ``y`` of shape ``(r,)`` or ``(r, m)`` and returns the
``(n, r)`` matrix ``U(x_i, y_j)``.  ``grad`` returns the partial derivative
(or a subgradient selection) in the first argument with shape
``(n, r) + x.shape[1:]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class CARAUtility:
    """``U(x, y) = -exp(-alpha (x + y)) / alpha`` for scalar atoms."""

    risk_aversion: float

    def __post_init__(self):
        if not self.risk_aversion > 0:
            raise ValueError("risk aversion must be positive")

    def value(self, x, y):
        a = self.risk_aversion
        return -np.exp(-a * (np.asarray(x)[:, None] + np.asarray(y)[None, :])) / a

    def grad(self, x, y):
        a = self.risk_aversion
        return np.exp(-a * (np.asarray(x)[:, None] + np.asarray(y)[None, :]))


@dataclass(frozen=True)
class LinearUtility:
    """``U(x, y) = x * y`` for scalar atoms."""

    def value(self, x, y):
        return np.outer(x, y)

    def grad(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        return np.broadcast_to(y[None, :], (x.shape[0], y.shape[0])).copy()


@dataclass(frozen=True)
class ShortageUtility:
    """Negated shortage ``U(x, y) = -sum_h max(y_h - x_h, 0)``.

    Concave but not strictly so.  ``grad`` returns the subgradient
    ``1{x_h < y_h}``, which is 0 at the kink.
    """

    def value(self, x, y):
        x, y = np.atleast_2d(x), np.atleast_2d(y)
        return -np.maximum(y[None, :, :] - x[:, None, :], 0.0).sum(axis=2)

    def grad(self, x, y):
        x, y = np.atleast_2d(x), np.atleast_2d(y)
        return (x[:, None, :] < y[None, :, :]).astype(float)


@dataclass(frozen=True)
class CallableUtility:
    """Wrap a scalar ``U(x, y)`` and its partial ``U_x(x, y)`` via broadcasting."""

    func: Callable
    dfunc: Callable

    def value(self, x, y):
        return np.asarray(self.func(np.asarray(x)[:, None], np.asarray(y)[None, :]), dtype=float)

    def grad(self, x, y):
        return np.asarray(self.dfunc(np.asarray(x)[:, None], np.asarray(y)[None, :]), dtype=float)
