"""Distance-graph propagation of the start-time constraints.

``weight[i][j]`` is an upper bound on ``st(j) - st(i)``. A MIN lag
``(i, j, T)`` becomes ``weight[j][i] = -T`` and a MAX lag ``(i, j, T)``
becomes ``weight[i][j] = T``. Duration-bearing MIN lags use the nominal
duration rounded up, matching the integer resource buckets used during
schedule generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Instance, LagKind

INF = np.inf


class TemporalInfeasible(Exception):
    def __init__(self, message: str, cycle: tuple[int, ...] = ()):
        super().__init__(message)
        self.cycle = cycle


def default_horizon(instance: Instance) -> int:
    """Sum of rounded-up durations plus every positive MIN lag."""
    h = sum(math.ceil(a.mean_duration) for a in instance.activities)
    h += sum(max(0, math.ceil(c.lag)) for c in instance.constraints if c.kind is LagKind.MIN)
    return int(h)


@dataclass
class DistanceGraph:
    weight: np.ndarray
    raw: np.ndarray
    horizon: float

    @property
    def n(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> DistanceGraph:
        return DistanceGraph(self.weight.copy(), self.raw.copy(), self.horizon)

    def est(self, i: int) -> float:
        return -self.weight[i, 0]

    def lst(self, i: int) -> float:
        return self.weight[0, i]


@dataclass(frozen=True)
class StartWindows:
    est: tuple[float, ...]
    lst: tuple[float, ...]

    def __getitem__(self, i: int) -> tuple[float, float]:
        return self.est[i], self.lst[i]

    @property
    def consistent(self) -> bool:
        return all(e <= l for e, l in zip(self.est, self.lst))


def raw_weights(instance: Instance, horizon: float) -> np.ndarray:
    n = instance.n_nodes
    w = np.full((n, n), INF)
    np.fill_diagonal(w, 0.0)
    for c in instance.constraints:
        i, j = c.source, c.target
        if c.kind is LagKind.MIN:
            lag = c.lag + (math.ceil(instance.activities[i].mean_duration) if c.duration_bearing else 0)
            w[j, i] = min(w[j, i], -lag)
        else:
            w[i, j] = min(w[i, j], c.lag)
    # every start lies in [st(0), st(0) + H]
    w[1:, 0] = np.minimum(w[1:, 0], 0.0)
    w[0, 1:] = np.minimum(w[0, 1:], horizon)
    return w


def floyd_warshall(w: np.ndarray) -> np.ndarray:
    d = w.copy()
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def negative_cycle(w: np.ndarray) -> tuple[int, ...]:
    """Bellman-Ford witness cycle on the raw weights, or ``()``."""
    n = w.shape[0]
    dist = np.zeros(n)
    parent = np.full(n, -1)
    edges = [(i, j, w[i, j]) for i in range(n) for j in range(n) if i != j and np.isfinite(w[i, j])]
    last = -1
    for _ in range(n):
        last = -1
        for i, j, c in edges:
            if dist[i] + c < dist[j] - 1e-12:
                dist[j] = dist[i] + c
                parent[j] = i
                last = j
        if last < 0:
            return ()
    v = last
    for _ in range(n):
        v = parent[v]
    cycle = [v]
    u = parent[v]
    while u != v:
        cycle.append(u)
        u = parent[u]
    cycle.append(v)
    return tuple(reversed(cycle))


def build_and_close(instance: Instance, horizon: float | None = None) -> DistanceGraph:
    if horizon is None:
        horizon = default_horizon(instance)
    raw = raw_weights(instance, horizon)
    closed = floyd_warshall(raw)
    if (np.diag(closed) < 0).any():
        raise TemporalInfeasible("temporal constraints are inconsistent", negative_cycle(raw))
    return DistanceGraph(closed, raw, float(horizon))


def windows(graph: DistanceGraph) -> StartWindows:
    w = graph.weight
    return StartWindows(tuple(float(-x) for x in w[:, 0]), tuple(float(x) for x in w[0, :]))


def _add_edge(d: np.ndarray, u: int, v: int, c: float) -> None:
    # exact APSP update for one new edge u -> v on a closed matrix
    if c >= d[u, v]:
        return
    np.minimum(d, d[:, u, None] + c + d[None, v, :], out=d)


def fix_start_inplace(graph: DistanceGraph, activity: int, t: float) -> None:
    d = graph.weight
    graph.raw[0, activity] = min(graph.raw[0, activity], t)
    graph.raw[activity, 0] = min(graph.raw[activity, 0], -t)
    _add_edge(d, 0, activity, t)
    _add_edge(d, activity, 0, -t)
    if d[0, 0] < 0 or d[activity, activity] < 0 or (np.diag(d) < 0).any():
        raise TemporalInfeasible(
            f"fixing activity {activity} at {t} conflicts with the constraints",
            negative_cycle(graph.raw),
        )


def fix_start(graph: DistanceGraph, activity: int, t: float) -> DistanceGraph:
    """New graph with ``st(activity) = t`` propagated; raises on conflict."""
    g = graph.copy()
    fix_start_inplace(g, activity, t)
    return g


def reclose(graph: DistanceGraph) -> DistanceGraph:
    """Full Floyd-Warshall from the raw weights (reference for the incremental path)."""
    closed = floyd_warshall(graph.raw)
    if (np.diag(closed) < 0).any():
        raise TemporalInfeasible("temporal constraints are inconsistent", negative_cycle(graph.raw))
    return DistanceGraph(closed, graph.raw.copy(), graph.horizon)
