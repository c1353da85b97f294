"""Activity lists and the randomized list-driven schedule generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .model import Instance, Schedule
from .temporal import DistanceGraph, TemporalInfeasible, build_and_close, fix_start_inplace

DEFAULT_RETRIES = 30

ActivityList = tuple[int, ...]


class CyclicPrecedence(ValueError):
    pass


@dataclass(frozen=True)
class FirstFailure:
    """The first activity of the list that could not be placed."""

    activity: int


GenerationOutcome = Union[Schedule, FirstFailure]


def precedence_pairs(instance: Instance, extra: Iterable[tuple[int, int]] = ()) -> set[tuple[int, int]]:
    """Direct ordering pairs between real activities (nonnegative MIN lags plus ``extra``)."""
    real = set(instance.real_ids)
    pairs = {(c.source, c.target) for c in instance.precedences() if c.source in real and c.target in real}
    pairs.update(extra)
    return pairs


def random_activity_list(
    instance: Instance, rng: np.random.Generator, extra: Iterable[tuple[int, int]] = ()
) -> ActivityList:
    """Random topological order; each step picks uniformly among the available activities."""
    return random_topological_order(list(instance.real_ids), precedence_pairs(instance, extra), rng)


def random_topological_order(
    nodes: Sequence[int], pairs: Iterable[tuple[int, int]], rng: np.random.Generator
) -> ActivityList:
    indeg = {v: 0 for v in nodes}
    succ: dict[int, list[int]] = {v: [] for v in nodes}
    for a, b in pairs:
        succ[a].append(b)
        indeg[b] += 1
    avail = sorted(v for v in nodes if indeg[v] == 0)
    out = []
    while avail:
        v = avail.pop(int(rng.integers(len(avail))))
        out.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                avail.append(w)
        avail.sort()
    if len(out) != len(nodes):
        raise CyclicPrecedence("nonnegative MIN lags form a cycle")
    return tuple(out)


def is_valid_list(al: Sequence[int], pairs: Iterable[tuple[int, int]]) -> bool:
    pos = {a: i for i, a in enumerate(al)}
    return all(pos[a] < pos[b] for a, b in pairs)


class _Profile:
    def __init__(self, instance: Instance, length: int):
        self.cap = np.asarray(instance.capacities, dtype=np.int64)
        self.use = np.zeros((instance.n_resources, length), dtype=np.int64)
        self.dur = [int(math.ceil(d)) for d in instance.durations()]
        self.req = []
        for a in instance.activities:
            ks = np.flatnonzero(a.demands)
            self.req.append((ks, np.asarray(a.demands, dtype=np.int64)[ks]))

    def _grow(self, end: int) -> None:
        if end > self.use.shape[1]:
            extra = np.zeros((self.use.shape[0], end - self.use.shape[1] + 16), dtype=np.int64)
            self.use = np.concatenate([self.use, extra], axis=1)

    def fits(self, a: int, t: int) -> bool:
        ks, r = self.req[a]
        d = self.dur[a]
        if not len(ks) or d == 0:
            return True
        self._grow(t + d)
        window = self.use[ks, t : t + d]
        return bool(np.all(window <= (self.cap[ks] - r)[:, None]))

    def feasible_starts(self, a: int, lo: int, hi: int) -> np.ndarray:
        """Boolean mask over ``t`` in ``[lo, hi]`` of starts that fit."""
        ks, r = self.req[a]
        d = self.dur[a]
        if not len(ks) or d == 0 or hi < lo:
            return np.ones(max(hi - lo + 1, 0), dtype=bool)
        self._grow(hi + d)
        free = self.cap[ks] - r
        use = self.use[ks]
        peak = use[:, lo : hi + 1].copy()
        for off in range(1, d):
            np.maximum(peak, use[:, lo + off : hi + 1 + off], out=peak)
        return (peak <= free[:, None]).all(axis=0)

    def add(self, a: int, t: int) -> None:
        ks, r = self.req[a]
        d = self.dur[a]
        if len(ks) and d:
            self._grow(t + d)
            self.use[ks, t : t + d] += r[:, None]


def generate_schedule(
    instance: Instance,
    al: Sequence[int],
    rng: np.random.Generator,
    retries: int = DEFAULT_RETRIES,
    *,
    strict: bool = False,
    graph: DistanceGraph | None = None,
) -> GenerationOutcome:
    """Fix activities in list order at random resource-feasible starts.

    Each activity gets ``retries`` uniform integer draws from its current
    window. Unless ``strict``, the window is then swept left to right, and
    on instances without maximal lags a failed pass is replaced by a
    deterministic earliest-feasible serial pass over the whole list.
    """
    if graph is None:
        graph = build_and_close(instance)
    g = graph.copy()
    profile = _Profile(instance, int(g.horizon) + 1)
    starts = [0.0] * instance.n_nodes
    failure = None
    for a in al:
        lo = math.ceil(g.est(a) - 1e-9)
        hi = math.floor(g.lst(a) + 1e-9)
        if lo > hi:
            failure = a
            break
        ok = profile.feasible_starts(a, lo, hi)
        chosen = None
        for _ in range(retries):
            t = int(rng.integers(lo, hi + 1))
            if ok[t - lo]:
                chosen = t
                break
        if chosen is None and not strict and ok.any():
            chosen = lo + int(np.argmax(ok))
        if chosen is None:
            failure = a
            break
        try:
            fix_start_inplace(g, a, chosen)
        except TemporalInfeasible:
            failure = a
            break
        profile.add(a, chosen)
        starts[a] = float(chosen)
    if failure is not None:
        if strict or instance.has_max_lags:
            return FirstFailure(failure)
        return serial_schedule(instance, al)
    starts[instance.sink] = float(math.ceil(g.est(instance.sink) - 1e-9))
    return Schedule(tuple(starts))


def serial_schedule(instance: Instance, al: Sequence[int]) -> Schedule:
    """Earliest resource-feasible start for each activity in list order.

    Only valid without maximal lags; start times respect every nonnegative
    MIN lag using rounded-up durations.
    """
    durs = [math.ceil(d) for d in instance.durations()]
    incoming: dict[int, list] = {}
    for c in instance.precedences():
        incoming.setdefault(c.target, []).append(c)
    total = sum(durs)
    profile = _Profile(instance, total + 1)
    starts = [0.0] * instance.n_nodes
    placed = {0}
    for a in al:
        est = 0
        for c in incoming.get(a, ()):
            if c.source not in placed:
                raise CyclicPrecedence(f"list places {a} before its predecessor {c.source}")
            est = max(est, math.ceil(starts[c.source] + c.lag + (durs[c.source] if c.duration_bearing else 0)))
        # the profile is empty beyond the sum of all durations, so a start exists below it
        t = est + int(np.argmax(profile.feasible_starts(a, est, est + total)))
        profile.add(a, t)
        starts[a] = float(t)
        placed.add(a)
    sink = instance.sink
    st_sink = 0
    for c in incoming.get(sink, ()):
        st_sink = max(st_sink, math.ceil(starts[c.source] + c.lag + (durs[c.source] if c.duration_bearing else 0)))
    starts[sink] = float(st_sink)
    return Schedule(tuple(starts))
