"""Turn a feasible schedule into a POS by dispatching activities onto
per-unit resource chains."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import Instance, Schedule
from .pos import POS, EdgeKind, PosEdge, precedence_edges, topological_order

OrderGraph = frozenset  # of (a, b) pairs meaning "a before b"


class NoAvailableChain(AssertionError):
    pass


def reachability(n: int, pairs: Iterable[tuple[int, int]]) -> np.ndarray:
    """Boolean transitive closure (strict) of a DAG given as pairs."""
    pairs = list(pairs)
    edges = [PosEdge(a, b, EdgeKind.PRECEDENCE) for a, b in pairs]
    order = topological_order(n, edges)
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in pairs:
        succ[a].append(b)
    reach = np.zeros((n, n), dtype=bool)
    for v in reversed(order):
        for w in succ[v]:
            reach[v, w] = True
            reach[v] |= reach[w]
    return reach


def problem_reachability(instance: Instance) -> np.ndarray:
    return reachability(instance.n_nodes, {(c.source, c.target) for c in instance.precedences()})


def dispatch_order(instance: Instance, schedule: Schedule) -> list[int]:
    """Real activities by start time; ties by a smallest-id-first topological rank."""
    edges = [PosEdge(c.source, c.target, EdgeKind.PRECEDENCE) for c in instance.precedences()]
    n = instance.n_nodes
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        succ[e.source].append(e.target)
        indeg[e.target] += 1
    heap = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(heap)
    rank = {}
    while heap:
        v = heapq.heappop(heap)
        rank[v] = len(rank)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, w)
    return sorted(instance.real_ids, key=lambda a: (schedule.starts[a], rank.get(a, a), a))


@dataclass
class _Unit:
    resource: int
    index: int
    last: int = 0
    end: float = 0.0


# picker(activity, resource, demand, available units, linked lasts) -> chosen units
Picker = Callable[[int, int, int, list[_Unit], set[int]], list[_Unit]]


def _chain(instance: Instance, schedule: Schedule, pick: Picker, tol: float = 1e-9) -> POS:
    durations = instance.durations()
    units = [[_Unit(k, u) for u in range(cap)] for k, cap in enumerate(instance.capacities)]
    members: list[list[list[int]]] = [[[] for _ in range(cap)] for cap in instance.capacities]
    chain_pairs: set[tuple[int, int]] = set()
    for a in dispatch_order(instance, schedule):
        st = schedule.starts[a]
        linked: set[int] = set()
        for k, r in enumerate(instance.activities[a].demands):
            if r == 0:
                continue
            avail = [u for u in units[k] if u.end <= st + tol]
            if len(avail) < r:
                raise NoAvailableChain(f"activity {a} needs {r} units of resource {k}, {len(avail)} free")
            chosen = pick(a, k, r, avail, linked)
            assert len({id(u) for u in chosen}) == r
            for u in chosen:
                if u.last != 0:
                    chain_pairs.add((u.last, a))
                linked.add(u.last)
                u.last = a
                u.end = st + durations[a]
                members[k][u.index].append(a)
    edges = precedence_edges(instance)
    edges += [PosEdge(s, t, EdgeKind.CHAIN, 0.0, True) for s, t in sorted(chain_pairs)]
    chains = {k: tuple(tuple(m) for m in members[k]) for k in range(instance.n_resources)}
    return POS(instance.n_nodes, tuple(edges), chains)


def chain_basic(instance: Instance, schedule: Schedule, rng: np.random.Generator) -> POS:
    """Each activity takes ``demand`` uniformly random available units per resource."""

    def pick(a, k, r, avail, linked):
        idx = rng.choice(len(avail), size=r, replace=False)
        return [avail[i] for i in sorted(idx)]

    return _chain(instance, schedule, pick)


def chain_flexible(instance: Instance, schedule: Schedule, rng: np.random.Generator) -> POS:
    """Random chaining that avoids new synchronization points.

    Units whose last activity already precedes the current one (in the
    problem, or because it was picked as a chain predecessor already) are
    taken first, then fresh units, then anything else.
    """
    reach = problem_reachability(instance)

    def pick(a, k, r, avail, linked):
        chosen: list[_Unit] = []
        pool = list(avail)
        while len(chosen) < r:
            tiers: list[list[_Unit]] = [[], [], []]
            for u in pool:
                if u.last != 0 and (u.last in linked or reach[u.last, a]):
                    tiers[0].append(u)
                elif u.last == 0:
                    tiers[1].append(u)
                else:
                    tiers[2].append(u)
            tier = next(t for t in tiers if t)
            u = tier[int(rng.integers(len(tier)))]
            chosen.append(u)
            linked.add(u.last)
            pool.remove(u)
        return chosen

    return _chain(instance, schedule, pick)


def chain_feedback(instance: Instance, schedule: Schedule, order: Iterable[tuple[int, int]] = ()) -> POS:
    """Deterministic first-fit chaining guided by problem precedences and the order graph.

    "First" means lowest unit index of the resource being served.
    """
    reach = problem_reachability(instance)
    g_reach = reachability(instance.n_nodes, order)

    def pick(a, k, r, avail, linked):
        P = [u for u in avail if u.last == 0 or reach[u.last, a]]
        O = [u for u in avail if u.last != 0 and g_reach[u.last, a]]
        first = P[0] if P else O[0] if O else avail[0]
        chosen = [first]
        if r > 1:
            rest = [u for u in avail if u is not first]
            c1 = [u for u in rest if u.last == first.last]
            c2 = [u for u in rest if u.last != first.last]
            chosen += (c1 + c2)[: r - 1]
        return chosen

    return _chain(instance, schedule, pick)


CHAINERS = {"basic", "flexible", "feedback"}


def chain(
    method: str,
    instance: Instance,
    schedule: Schedule,
    rng: np.random.Generator,
    order: Sequence[tuple[int, int]] = (),
) -> POS:
    if method == "basic":
        return chain_basic(instance, schedule, rng)
    if method == "flexible":
        return chain_flexible(instance, schedule, rng)
    if method == "feedback":
        return chain_feedback(instance, schedule, order)
    raise ValueError(f"unknown chaining method {method!r}")
