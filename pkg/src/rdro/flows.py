"""Exact transportation problems by successive shortest paths.

Supplies ``S_i`` at sources and demands ``d_j`` at sinks with
``sum S >= sum d``.  A slack sink with zero cost absorbs the surplus, so
the problem is balanced; every augmentation follows a cheapest residual
path found by Bellman-Ford (residual arcs can have negative cost).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, InfeasibleError

FLOW_ATOL = 1e-12


@dataclass(frozen=True)
class TransportSolution:
    cost: float
    flow: np.ndarray
    supply_price: np.ndarray
    demand_price: np.ndarray


def _bellman_ford(cost, flow, supply_left, demand_left):
    """Cheapest residual path from any source with supply to any sink with demand.

    Nodes are sources ``0..n-1`` and sinks ``n..n+m-1``.  Returns the
    distance labels and predecessor array.
    """
    n, m = cost.shape
    dist = np.full(n + m, np.inf)
    pred = np.full(n + m, -1)
    dist[:n][supply_left > FLOW_ATOL] = 0.0
    for _ in range(n + m):
        changed = False
        # forward arcs i -> j, unlimited capacity
        cand = dist[:n, None] + cost
        best_i = np.argmin(cand, axis=0)
        best = cand[best_i, np.arange(m)]
        better = best < dist[n:] - 1e-15 * np.maximum(1.0, np.abs(best))
        if better.any():
            dist[n:][better] = best[better]
            pred[n:][better] = best_i[better]
            changed = True
        # backward arcs j -> i where flow is positive
        back = np.where(flow > FLOW_ATOL, dist[None, n:] - cost, np.inf)
        best_j = np.argmin(back, axis=1)
        best = back[np.arange(n), best_j]
        better = best < dist[:n] - 1e-15 * np.maximum(1.0, np.abs(best))
        if better.any():
            dist[:n][better] = best[better]
            pred[:n][better] = n + best_j[better]
            changed = True
        if not changed:
            return dist, pred
    raise ArithmeticError("negative residual cycle; costs are not consistent")


def solve_transport(cost, supply, demand) -> TransportSolution:
    """Minimize ``sum c_ij z_ij`` s.t. ``sum_i z_ij = d_j``, ``sum_j z_ij <= S_i``.

    ``supply_price`` holds the nonnegative multipliers ``w_i`` of the supply
    constraints, so ``-w_i`` is a subgradient of the optimal cost in
    ``S_i``; ``demand_price`` holds ``v_j``.  The dual value
    ``d.v - S.w`` equals the cost.
    """
    c = np.asarray(cost, dtype=float)
    s = np.asarray(supply, dtype=float).reshape(-1)
    d = np.asarray(demand, dtype=float).reshape(-1)
    if c.shape != (s.shape[0], d.shape[0]):
        raise DimensionError(f"cost has shape {c.shape}, expected {(s.shape[0], d.shape[0])}")
    if np.any(s < 0) or np.any(d < 0):
        raise DomainError("supplies and demands must be nonnegative")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise DomainError("costs must be finite and nonnegative")
    deficit = float(d.sum() - s.sum())
    if deficit > FLOW_ATOL * max(1.0, float(d.sum())):
        raise InfeasibleError(f"demand exceeds supply by {deficit:g}", deficit)

    # append the zero-cost slack sink
    n, m = c.shape
    cc = np.hstack([c, np.zeros((n, 1))])
    dd = np.append(d, max(0.0, float(s.sum() - d.sum())))
    flow = np.zeros((n, m + 1))
    supply_left = s.copy()
    demand_left = dd.copy()
    scale = max(1.0, float(s.sum()))

    for _ in range(4 * (n + m + 1) ** 2 + 10):
        if demand_left.max(initial=0.0) <= FLOW_ATOL * scale or supply_left.max(initial=0.0) <= FLOW_ATOL * scale:
            break
        dist, pred = _bellman_ford(cc, flow, supply_left, demand_left)
        targets = np.flatnonzero(demand_left > FLOW_ATOL * scale)
        sink = targets[np.argmin(dist[n + targets])]
        if not np.isfinite(dist[n + sink]):
            break
        # walk back to the source, collecting the bottleneck
        path = []
        node = n + sink
        amount = demand_left[sink]
        while True:
            prev = pred[node]
            if prev < 0:
                break
            if node >= n:                       # forward arc prev -> node
                path.append((prev, node - n, +1))
            else:                               # backward arc prev -> node
                path.append((node, prev - n, -1))
                amount = min(amount, flow[node, prev - n])
            node = prev
        amount = min(amount, supply_left[node])
        for i, j, sign in path:
            flow[i, j] += sign * amount
        supply_left[node] -= amount
        demand_left[sink] -= amount
        np.maximum(flow, 0.0, out=flow)
    else:
        raise ArithmeticError("successive shortest paths did not terminate")

    # potentials on the final residual graph give the multipliers
    labels = _potentials(cc, flow, s)
    slack = labels[n + m]
    supply_price = np.maximum(labels[:n] - slack, 0.0)
    demand_price = labels[n:n + m] - slack
    z = flow[:, :m]
    return TransportSolution(float(np.sum(c * z)), z, supply_price, demand_price)


def _potentials(cost, flow, supply):
    """Shortest-path labels from a virtual root joined to every node at cost 0."""
    n, m1 = cost.shape
    dist = np.zeros(n + m1)
    for _ in range(n + m1 + 1):
        fwd = np.min(dist[:n, None] + cost, axis=0)
        back = np.min(np.where(flow > FLOW_ATOL, dist[None, n:] - cost, np.inf), axis=1)
        new = dist.copy()
        new[n:] = np.minimum(new[n:], fwd)
        new[:n] = np.minimum(new[:n], back)
        if np.allclose(new, dist, rtol=0, atol=0):
            return dist
        dist = new
    return dist
