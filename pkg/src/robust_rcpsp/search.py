"""Robust local search over activity lists, with optional ordering generation."""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .chaining import chain, reachability
from .model import Instance, LagKind, Schedule, TemporalConstraint, normalize
from .pos import POS, pos_to_dict
from .rules import MomentPair, Rule, chebyshev_factor, robust_fitness, rule_moments
from .schedule import (
    ActivityList,
    FirstFailure,
    generate_schedule,
    is_valid_list,
    precedence_pairs,
    random_activity_list,
)
from .temporal import DistanceGraph, TemporalInfeasible, build_and_close

RESULT_VERSION = 1


@dataclass(frozen=True)
class SearchConfig:
    rule: Rule = Rule.GNLA
    epsilon: float = 0.1
    max_iterations: int = 1000
    escape_probability: float = 0.01
    retries: int = 30
    seed: int = 0
    chaining: str = "flexible"
    ordering: bool = False  # OG: order generation before the search
    feedback: bool = False  # RC: robustness-feedback chaining
    og_samples: int = 100
    og_index_parameter: float = 0.6
    strict: bool = False
    horizon: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))
        chebyshev_factor(self.epsilon)
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if not 0 <= self.escape_probability <= 1:
            raise ValueError("escape_probability must lie in [0,1]")
        if self.retries < 1:
            raise ValueError("retries must be positive")
        if self.chaining not in ("basic", "flexible", "feedback"):
            raise ValueError(f"unknown chaining method {self.chaining!r}")
        if self.og_samples < 1:
            raise ValueError("og_samples must be positive")
        if not 0.5 <= self.og_index_parameter <= 1:
            raise ValueError("og_index_parameter must lie in [0.5,1]")

    @property
    def chaining_method(self) -> str:
        return "feedback" if self.feedback else self.chaining

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rule"] = self.rule.value
        return d


# ---------------------------------------------------------------------------
# moves


def shift_ahead_move(
    al: Sequence[int], failing: int, rng: np.random.Generator, pairs: Iterable[tuple[int, int]] = ()
) -> tuple[ActivityList, bool]:
    """Move ``failing`` to a uniformly random earlier slot that keeps ``pairs`` ordered.

    Returns the new list and a flag that is set when no such slot exists.
    """
    al = list(al)
    i = al.index(failing)
    preds = {a for a, b in pairs if b == failing}
    lo = max((k for k in range(i) if al[k] in preds), default=-1) + 1
    if lo >= i:
        return tuple(al), True
    j = int(rng.integers(lo, i))
    al.insert(j, al.pop(i))
    return tuple(al), False


def swap_move(
    al: Sequence[int], rng: np.random.Generator, pairs: Iterable[tuple[int, int]] = ()
) -> tuple[ActivityList, bool]:
    """Swap a random pair of activities; up to ``len(al)**2`` tries to find a valid one."""
    n = len(al)
    if n < 2:
        return tuple(al), True
    pairs = list(pairs)
    for _ in range(n * n):
        i, j = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
        new = list(al)
        new[i], new[j] = new[j], new[i]
        if _swap_valid(new, i, j, pairs):
            return tuple(new), False
    return tuple(al), True


def _swap_valid(al: list[int], i: int, j: int, pairs: list[tuple[int, int]]) -> bool:
    window = set(al[i : j + 1])
    touched = {al[i], al[j]}
    pos = None
    for a, b in pairs:
        if (a in touched or b in touched) and a in window and b in window:
            if pos is None:
                pos = {x: k for k, x in enumerate(al)}
            if pos[a] > pos[b]:
                return False
    return True


# ---------------------------------------------------------------------------
# ordering generation


class Decision(str, enum.Enum):
    A_BEFORE_B = "a_before_b"
    B_BEFORE_A = "b_before_a"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class SelectedPair:
    a: int
    b: int


@dataclass(frozen=True)
class OrderDecision:
    pair: tuple[int, int]
    decision: Decision
    index_value: float
    samples_used: int
    flag: str | None = None

    @property
    def ordered(self) -> tuple[int, int] | None:
        a, b = self.pair
        if self.decision is Decision.A_BEFORE_B:
            return (a, b)
        if self.decision is Decision.B_BEFORE_A:
            return (b, a)
        return None


def pairs_selection(instance: Instance) -> list[SelectedPair]:
    """Unrelated real-activity pairs that cannot share some resource."""
    reach = reachability(instance.n_nodes, {(c.source, c.target) for c in instance.precedences()})
    acts = instance.activities
    caps = instance.capacities
    out = []
    real = list(instance.real_ids)
    for x, a in enumerate(real):
        for b in real[x + 1 :]:
            if reach[a, b] or reach[b, a]:
                continue
            if any(ra + rb > c for ra, rb, c in zip(acts[a].demands, acts[b].demands, caps)):
                out.append(SelectedPair(a, b))
    return out


def decide(wins_ab: int, wins_ba: int, used: int, m: int, ip: float) -> tuple[Decision, float, str | None]:
    """Order decision from win counts over ``used`` bilaterally feasible samples.

    Ties count for neither side, so the reverse order needs its own win
    share above ``ip`` (equivalent to ``iv < 1 - ip`` without ties).
    """
    if used == 0 or used < m / 4:
        iv = wins_ab / used if used else 0.5
        return Decision.UNDECIDED, iv, "insufficient-samples"
    iv = wins_ab / used
    if iv > ip:
        return Decision.A_BEFORE_B, iv, None
    if wins_ba / used > ip:
        return Decision.B_BEFORE_A, iv, None
    return Decision.UNDECIDED, iv, None


def _force_order(al: Sequence[int], first: int, second: int) -> list[int]:
    al = list(al)
    i, j = al.index(first), al.index(second)
    if i > j:
        al[i], al[j] = al[j], al[i]
    return al


def _repair(al: Sequence[int], pairs: set[tuple[int, int]]) -> ActivityList:
    """Topological sort of ``pairs`` that keeps the list positions as priorities."""
    if is_valid_list(al, pairs):
        return tuple(al)
    rank = {a: k for k, a in enumerate(al)}
    indeg = {a: 0 for a in al}
    succ: dict[int, list[int]] = {a: [] for a in al}
    for a, b in pairs:
        succ[a].append(b)
        indeg[b] += 1
    heap = [(rank[a], a) for a in al if indeg[a] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        _, a = heapq.heappop(heap)
        out.append(a)
        for b in succ[a]:
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(heap, (rank[b], b))
    return tuple(out)


def _fitness_of(
    instance: Instance,
    graph: DistanceGraph,
    al: Sequence[int],
    config: SearchConfig,
    rng: np.random.Generator,
) -> float | None:
    out = generate_schedule(instance, al, rng, config.retries, strict=config.strict, graph=graph)
    if isinstance(out, FirstFailure):
        return None
    pos = chain(config.chaining_method, instance, out, rng)
    return robust_fitness(rule_moments(pos, instance, config.rule), config.epsilon)


def generate_ordering(
    instance: Instance,
    pairs: Sequence[SelectedPair],
    config: SearchConfig,
    rng: np.random.Generator,
) -> tuple[frozenset, list[OrderDecision]]:
    """Decide an order for each selected pair from paired list samples.

    Returns the accepted order pairs and one decision record per pair.
    """
    instance = normalize(instance)
    m = config.og_samples
    base = precedence_pairs(instance)
    samples = [random_activity_list(instance, rng) for _ in range(m)]
    decisions = []
    for p in pairs:
        a, b = p.a, p.b
        sides = []
        for first, second in ((a, b), (b, a)):
            inst = instance.with_constraints(
                [TemporalConstraint(first, second, LagKind.MIN, 0.0, duration_bearing=True)]
            )
            try:
                graph = build_and_close(inst, config.horizon)
            except TemporalInfeasible:
                graph = None
            sides.append((inst, graph, base | {(first, second)}, first, second))
        wins_ab = wins_ba = used = 0
        for al in samples:
            f = []
            for inst, graph, prec, first, second in sides:
                if graph is None:
                    f.append(None)
                    continue
                lst = _repair(_force_order(al, first, second), prec)
                f.append(_fitness_of(inst, graph, lst, config, rng))
            if f[0] is None or f[1] is None:
                continue
            used += 1
            if f[0] < f[1]:
                wins_ab += 1
            elif f[1] < f[0]:
                wins_ba += 1
        dec, iv, flag = decide(wins_ab, wins_ba, used, m, config.og_index_parameter)
        decisions.append(OrderDecision((a, b), dec, iv, used, flag))

    # accept by confidence, never closing a cycle with the problem precedences
    accepted: set[tuple[int, int]] = set()
    out = list(decisions)
    ranked = sorted(range(len(out)), key=lambda k: (-abs(out[k].index_value - 0.5), k))
    for k in ranked:
        d = out[k]
        edge = d.ordered
        if edge is None:
            continue
        trial = base | accepted | {edge}
        try:
            reachability(instance.n_nodes, trial)
        except ValueError:
            out[k] = OrderDecision(d.pair, d.decision, d.index_value, d.samples_used, "cycle")
            continue
        accepted.add(edge)
    return frozenset(accepted), out


# ---------------------------------------------------------------------------
# robust local search


@dataclass(frozen=True)
class TraceStep:
    iteration: int
    state: str  # "F" or "I" before the move
    move: str  # "shift" or "swap"
    move_flagged: bool
    neighbor_feasible: bool
    fitness: float | None  # S* of the neighbour when feasible
    s_now: float | None  # S*_now before the step
    p: float | None  # escape draw, only for F -> infeasible neighbours
    accepted: bool
    s_min: float  # after the step


@dataclass
class RobustResult:
    pos: POS | None
    robust_makespan: float
    epsilon: float
    rule: Rule
    iterations_used: int
    feasible_fraction: float
    seed: int
    moments: MomentPair | None = None
    activity_list: ActivityList = ()
    schedule: Schedule | None = None
    order: frozenset = frozenset()
    decisions: list[OrderDecision] = field(default_factory=list)
    trace: list[TraceStep] = field(default_factory=list, repr=False)
    config: SearchConfig | None = None

    @property
    def found(self) -> bool:
        return self.pos is not None


class NoFeasibleListFound(RuntimeError):
    pass


def robust_local_search(instance: Instance, config: SearchConfig) -> RobustResult:
    instance = normalize(instance)
    graph = build_and_close(instance, config.horizon)
    rng = np.random.default_rng(config.seed)

    order: frozenset = frozenset()
    decisions: list[OrderDecision] = []
    if config.ordering:
        order, decisions = generate_ordering(instance, pairs_selection(instance), config, rng)
    pairs = precedence_pairs(instance, order)

    def attempt(al):
        out = generate_schedule(instance, al, rng, config.retries, strict=config.strict, graph=graph)
        if isinstance(out, FirstFailure):
            return out, None, None, None
        pos = chain(config.chaining_method, instance, out, rng, sorted(order))
        mp = rule_moments(pos, instance, config.rule)
        return out, pos, mp, robust_fitness(mp, config.epsilon)

    al = random_activity_list(instance, rng, order)
    outcome, pos, mp, fit = attempt(al)
    feasible = pos is not None
    best = None
    s_now = s_min = math.inf
    failing = None
    if feasible:
        s_now = s_min = fit
        best = (pos, mp, fit, al, outcome)
    else:
        failing = outcome.activity

    trace: list[TraceStep] = []
    in_f = 0
    for it in range(1, config.max_iterations + 1):
        state = "F" if feasible else "I"
        if feasible:
            new_al, flagged = swap_move(al, rng, pairs)
            move = "swap"
        else:
            new_al, flagged = shift_ahead_move(al, failing, rng, pairs)
            move = "shift"
        out2, pos2, mp2, fit2 = attempt(new_al)
        p = None
        s_now_before = s_now if feasible else None
        if pos2 is not None:
            accepted = (not feasible) or fit2 <= s_now
            if accepted:
                s_now = fit2
                al = new_al
                feasible = True
                failing = None
                if fit2 <= s_min:
                    s_min = fit2
                    best = (pos2, mp2, fit2, new_al, out2)
        elif not feasible:
            accepted = True
            al = new_al
            failing = out2.activity
        else:
            p = float(rng.random())
            accepted = p < config.escape_probability
            if accepted:
                al = new_al
                feasible = False
                failing = out2.activity
                s_now = math.inf
        in_f += feasible
        trace.append(
            TraceStep(it, state, move, flagged, pos2 is not None, fit2, s_now_before, p, accepted, s_min)
        )

    n_it = config.max_iterations
    frac = in_f / n_it if n_it else float(feasible)
    if best is None:
        return RobustResult(
            None, math.inf, config.epsilon, config.rule, n_it, frac, config.seed,
            order=order, decisions=decisions, trace=trace, config=config,
        )
    bpos, bmp, bfit, bal, bsched = best
    return RobustResult(
        bpos, bfit, config.epsilon, config.rule, n_it, frac, config.seed,
        moments=bmp, activity_list=tuple(bal), schedule=bsched,
        order=order, decisions=decisions, trace=trace, config=config,
    )


def validate_trace(trace: Sequence[TraceStep], escape_probability: float = 0.01) -> list[str]:
    """Replay the acceptance rule over a recorded trace; returns the discrepancies."""
    errors = []
    state = trace[0].state if trace else "F"
    s_now = trace[0].s_now if trace and trace[0].state == "F" else math.inf
    s_min = math.inf
    for k, st in enumerate(trace):
        if k == 0 and st.state == "F":
            s_min = st.s_now
        if st.state != state:
            errors.append(f"step {st.iteration}: state {st.state}, expected {state}")
        if st.state == "F" and st.s_now != s_now:
            errors.append(f"step {st.iteration}: S*_now {st.s_now}, expected {s_now}")
        expected_move = "swap" if state == "F" else "shift"
        if st.move != expected_move:
            errors.append(f"step {st.iteration}: move {st.move} in state {state}")
        if st.neighbor_feasible:
            should = state == "I" or st.fitness <= s_now
            if should:
                s_now = st.fitness
                state = "F"
                s_min = min(s_min, st.fitness)
        elif state == "I":
            should = True
        else:
            if st.p is None:
                errors.append(f"step {st.iteration}: escape draw missing")
                should = False
            else:
                should = st.p < escape_probability
            if should:
                state = "I"
                s_now = math.inf
        if st.accepted != should:
            errors.append(f"step {st.iteration}: accepted={st.accepted}, rule says {should}")
        if st.s_min != s_min:
            errors.append(f"step {st.iteration}: S*_min {st.s_min}, expected {s_min}")
    return errors


# ---------------------------------------------------------------------------
# serialization


def result_to_dict(result: RobustResult) -> dict:
    doc: dict = {
        "version": RESULT_VERSION,
        "found": result.found,
        "rule": result.rule.value,
        "epsilon": result.epsilon,
        "robust_makespan": result.robust_makespan if result.found else None,
        "mean": result.moments.mean if result.moments else None,
        "variance": result.moments.var if result.moments else None,
        "iterations_used": result.iterations_used,
        "feasible_fraction": result.feasible_fraction,
        "seed": result.seed,
        "activity_list": list(result.activity_list),
        "baseline_starts": list(result.schedule.starts) if result.schedule else None,
        "order": [list(p) for p in sorted(result.order)],
        "decisions": [
            {
                "pair": list(d.pair),
                "decision": d.decision.value,
                "index_value": d.index_value,
                "samples_used": d.samples_used,
                "flag": d.flag,
            }
            for d in result.decisions
        ],
        "pos": pos_to_dict(result.pos) if result.pos is not None else None,
    }
    if result.config is not None:
        doc["config"] = result.config.to_dict()
    return doc
