"""Partial order schedules: typed precedence DAGs plus per-unit resource chains."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .model import Instance, Schedule

POS_VERSION = 1


class EdgeKind(str, enum.Enum):
    PRECEDENCE = "precedence"
    CHAIN = "chain"


class CyclicPOS(ValueError):
    pass


@dataclass(frozen=True)
class PosEdge:
    source: int
    target: int
    kind: EdgeKind
    lag: float = 0.0
    duration_bearing: bool = True

    def gap(self, durations: Sequence[float]) -> float:
        return self.lag + durations[self.source] if self.duration_bearing else self.lag


@dataclass(frozen=True)
class POS:
    n: int
    edges: tuple[PosEdge, ...]
    chains: dict[int, tuple[tuple[int, ...], ...]] = field(default_factory=dict, compare=False)

    @property
    def sink(self) -> int:
        return self.n - 1

    @cached_property
    def incoming(self) -> list[list[PosEdge]]:
        inc: list[list[PosEdge]] = [[] for _ in range(self.n)]
        for e in self.edges:
            inc[e.target].append(e)
        return inc

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        return topological_order(self.n, self.edges)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(e.source, e.target) for e in self.edges}

    def chain_edges(self) -> list[PosEdge]:
        return [e for e in self.edges if e.kind is EdgeKind.CHAIN]

    @cached_property
    def reduced_edges(self) -> tuple[PosEdge, ...]:
        return reduce_edges(self.n, self.edges, self.topological_order)


def topological_order(n: int, edges: Iterable[PosEdge]) -> tuple[int, ...]:
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        succ[e.source].append(e.target)
        indeg[e.target] += 1
    stack = [v for v in range(n - 1, -1, -1) if indeg[v] == 0]
    order = []
    while stack:
        v = stack.pop()
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    if len(order) != n:
        raise CyclicPOS("POS edge graph contains a cycle")
    return tuple(order)


def reduce_edges(n: int, edges: Sequence[PosEdge], order: Sequence[int]) -> tuple[PosEdge, ...]:
    """Drop edges implied by another path for every nonnegative realization.

    An edge ``u -> v`` is implied when a different route from ``u`` reaches
    ``v`` with at least the same total lag and, if the edge carries the
    duration of ``u``, that route starts with a duration-bearing edge too.
    """
    best: dict[tuple[int, int, bool], PosEdge] = {}
    for e in edges:
        key = (e.source, e.target, e.duration_bearing)
        if key not in best or e.lag > best[key].lag or (e.lag == best[key].lag and e.kind is EdgeKind.CHAIN):
            best[key] = e
    uniq = list(best.values())
    out_edges: list[list[PosEdge]] = [[] for _ in range(n)]
    for e in uniq:
        out_edges[e.source].append(e)

    # longest lag-sum between every ordered pair, -inf when unreachable
    reach = np.full((n, n), -np.inf)
    for w in reversed(order):
        reach[w, w] = 0.0
        for e in out_edges[w]:
            np.maximum(reach[w], e.lag + reach[e.target], out=reach[w])

    kept = []
    for e in uniq:
        implied = False
        for alt in out_edges[e.source]:
            if alt is e or (e.duration_bearing and not alt.duration_bearing):
                continue
            if alt.lag + reach[alt.target, e.target] >= e.lag:
                implied = True
                break
        if not implied:
            kept.append(e)
    kept.sort(key=lambda e: (e.source, e.target, not e.duration_bearing))
    return tuple(kept)


def precedence_edges(instance: Instance) -> list[PosEdge]:
    return [
        PosEdge(c.source, c.target, EdgeKind.PRECEDENCE, c.lag, c.duration_bearing)
        for c in instance.precedences()
    ]


def earliest_start(pos: POS, durations: Sequence[float]) -> Schedule:
    """Longest-path start times; ``starts[sink]`` is the makespan."""
    st = [0.0] * pos.n
    inc = pos.incoming
    for v in pos.topological_order:
        best = 0.0
        for e in inc[v]:
            t = st[e.source] + e.gap(durations)
            if t > best:
                best = t
        st[v] = best
    return Schedule(tuple(st))


def earliest_start_batch(pos: POS, durations: np.ndarray) -> np.ndarray:
    """Vectorized earliest start over rows of a ``(samples, n)`` duration matrix."""
    m = durations.shape[0]
    st = np.zeros((m, pos.n))
    inc = pos.incoming
    for v in pos.topological_order:
        col = st[:, v]
        for e in inc[v]:
            cand = st[:, e.source] + e.lag
            if e.duration_bearing:
                cand = cand + durations[:, e.source]
            np.maximum(col, cand, out=col)
    return st


def pos_to_dict(pos: POS) -> dict:
    return {
        "version": POS_VERSION,
        "nodes": pos.n,
        "edges": [
            {
                "from": e.source,
                "to": e.target,
                "kind": e.kind.value,
                "lag": e.lag,
                "duration_bearing": e.duration_bearing,
            }
            for e in pos.edges
        ],
        "chains": {str(k): [list(u) for u in units] for k, units in sorted(pos.chains.items())},
    }


def pos_from_dict(doc: dict) -> POS:
    if doc.get("version") != POS_VERSION:
        raise ValueError(f"unsupported POS document version {doc.get('version')!r}")
    n = int(doc["nodes"])
    edges = []
    for e in doc["edges"]:
        s, t = int(e["from"]), int(e["to"])
        if not (0 <= s < n and 0 <= t < n):
            raise ValueError(f"POS edge {s}->{t} outside 0..{n - 1}")
        edges.append(PosEdge(s, t, EdgeKind(e["kind"]), float(e["lag"]), bool(e["duration_bearing"])))
    chains = {int(k): tuple(tuple(int(a) for a in u) for u in units) for k, units in doc.get("chains", {}).items()}
    pos = POS(n, tuple(edges), chains)
    pos.topological_order  # validates acyclicity
    return pos


def write_pos(pos: POS) -> str:
    return json.dumps(pos_to_dict(pos), indent=1) + "\n"


def parse_pos(text: str) -> POS:
    return pos_from_dict(json.loads(text))
