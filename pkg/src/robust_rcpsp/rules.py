"""Moment propagation over a POS and the Chebyshev robust fitness.

Two decision rules bound the start time of every node:

* SLA keeps an affine form in the segregated parts ``z+ = max(z, 0)`` and
  ``z- = max(-z, 0)`` of each perturbation. Forms are stored with
  nonnegative ``cplus``/``cminus`` maps and read as
  ``c0 + sum(cplus[k] z+_k) - sum(cminus[k] z-_k)``, so a duration
  ``d0 + z`` contributes ``+1`` to both maps.
* GNLA keeps only an upper bound on mean and variance and merges parallel
  branches with pairwise max bounds in a variance-sorted tournament.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import Instance
from .pos import POS

# incremented whenever a variance expression had to be clamped at zero
DIAGNOSTICS: Counter = Counter()


class Rule(str, enum.Enum):
    SLA = "sla"
    GNLA = "gnla"


@dataclass(frozen=True)
class SegregatedMoments:
    mu: float
    var_p: float
    var_m: float


@dataclass(frozen=True)
class MomentPair:
    mean: float
    var: float

    def __post_init__(self):
        if self.var < 0:
            raise ValueError(f"variance must be nonnegative, got {self.var}")


@dataclass(frozen=True)
class SegregatedLinearForm:
    c0: float = 0.0
    cplus: Mapping[int, float] = field(default_factory=dict)
    cminus: Mapping[int, float] = field(default_factory=dict)

    def value(self, zplus: Mapping[int, float], zminus: Mapping[int, float]) -> float:
        """Evaluate the form at one realization of the segregated parts."""
        v = self.c0
        v += sum(c * zplus.get(k, 0.0) for k, c in self.cplus.items())
        v -= sum(c * zminus.get(k, 0.0) for k, c in self.cminus.items())
        return v


@dataclass(frozen=True)
class GroupingPlan:
    couples: tuple[tuple[int, ...], ...]


def segregated_moments(distribution: str, scale: float) -> SegregatedMoments:
    """Mean and variances of ``z+``/``z-`` for a symmetric zero-mean perturbation.

    ``scale`` is sigma for ``normal`` and the half-width ``a`` for ``uniform``.
    """
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    if distribution == "normal":
        mu = scale / math.sqrt(2 * math.pi)
        var = (math.pi - 1) * scale**2 / (2 * math.pi)
    elif distribution == "uniform":
        mu = scale / 4
        var = 5 * scale**2 / 48
    else:
        raise ValueError(f"unsupported distribution {distribution!r} (normal or uniform)")
    return SegregatedMoments(mu, var, var)


def chebyshev_factor(epsilon: float) -> float:
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon out of (0,1]")
    return math.sqrt(1.0 / epsilon - 1.0)


def robust_fitness(mp: MomentPair, epsilon: float) -> float:
    """One-sided Chebyshev bound exceeded with probability at most ``epsilon``."""
    if mp.var < 0:
        raise ValueError("variance must be nonnegative")
    return mp.mean + chebyshev_factor(epsilon) * math.sqrt(mp.var)


# ---------------------------------------------------------------------------
# SLA


def sla_sum(forms: Sequence[SegregatedLinearForm], added_const: float = 0.0) -> SegregatedLinearForm:
    c0 = added_const
    cp: dict[int, float] = {}
    cm: dict[int, float] = {}
    for f in forms:
        c0 += f.c0
        for k, c in f.cplus.items():
            cp[k] = cp.get(k, 0.0) + c
        for k, c in f.cminus.items():
            cm[k] = cm.get(k, 0.0) + c
    return SegregatedLinearForm(c0, cp, cm)


def sla_max(forms: Sequence[SegregatedLinearForm]) -> SegregatedLinearForm:
    """Pointwise upper bound of several forms for every ``z+, z- >= 0``.

    Positive parts take the largest coefficient; the subtracted negative
    parts take the smallest, a missing key counting as zero.
    """
    if not forms:
        raise ValueError("sla_max needs at least one form")
    c0 = max(f.c0 for f in forms)
    cp: dict[int, float] = {}
    for f in forms:
        for k, c in f.cplus.items():
            if c > cp.get(k, 0.0):
                cp[k] = c
    common = set(forms[0].cminus)
    for f in forms[1:]:
        common &= set(f.cminus)
    cm = {}
    for k in sorted(common):
        c = min(f.cminus[k] for f in forms)
        if c > 0:
            cm[k] = c
    return SegregatedLinearForm(c0, cp, cm)


def sla_form_moments(
    form: SegregatedLinearForm,
    moments: Mapping[int, SegregatedMoments] | Sequence[SegregatedMoments],
    cross_term: str = "exact",
) -> MomentPair:
    """Mean and variance of a form under independent perturbations.

    ``z+`` and ``z-`` of one activity are dependent with covariance
    ``-mu**2``, which adds ``2 c+ c- mu**2``. ``cross_term="literal"``
    subtracts ``2 c+ c- mu`` instead.
    A negative variance (possible only with the literal term) is clamped to
    zero and counted in ``DIAGNOSTICS["variance_clamps"]``.
    """
    if cross_term not in ("exact", "literal"):
        raise ValueError("cross_term must be 'exact' or 'literal'")
    mean = form.c0
    var = 0.0
    for k in set(form.cplus) | set(form.cminus):
        try:
            m = moments[k]
        except (KeyError, IndexError):
            raise KeyError(f"no segregated moments for activity {k}") from None
        cp = form.cplus.get(k, 0.0)
        cm = form.cminus.get(k, 0.0)
        mean += (cp - cm) * m.mu
        cross = m.mu**2 if cross_term == "exact" else -m.mu
        var += (cp * cp) * m.var_p + (cm * cm) * m.var_m + 2 * cp * cm * cross
    if var < 0:
        DIAGNOSTICS["variance_clamps"] += 1
        var = 0.0
    return MomentPair(mean, var)


def instance_moments(instance: Instance, distribution: str = "normal") -> list[SegregatedMoments]:
    return [segregated_moments(distribution, a.sigma) for a in instance.activities]


def sla_eval(pos: POS, instance: Instance) -> SegregatedLinearForm:
    """Propagate affine start-time forms through the POS; returns the sink form."""
    n = pos.n
    d0 = instance.durations()
    c0 = np.zeros(n)
    cp = np.zeros((n, n))
    cm = np.zeros((n, n))
    s = pos.sink
    inc: list[list] = [[] for _ in range(n)]
    for e in pos.reduced_edges:
        inc[e.target].append(e)
    for v in pos.topological_order:
        first = True
        for e in inc[v]:
            u = e.source
            k0 = c0[u] + e.lag
            kp = cp[u]
            km = cm[u]
            if e.duration_bearing and u not in (0, s):
                k0 += d0[u]
                kp = kp.copy()
                km = km.copy()
                kp[u] += 1.0
                km[u] += 1.0
            if first:
                c0[v], cp[v], cm[v] = k0, kp, km
                first = False
            else:
                c0[v] = max(c0[v], k0)
                np.maximum(cp[v], kp, out=cp[v])
                np.minimum(cm[v], km, out=cm[v])
    plus = {int(k): float(cp[s, k]) for k in np.flatnonzero(cp[s])}
    minus = {int(k): float(cm[s, k]) for k in np.flatnonzero(cm[s])}
    return SegregatedLinearForm(float(c0[s]), plus, minus)


# ---------------------------------------------------------------------------
# GNLA


def group_pairs(variances: Sequence[float]) -> GroupingPlan:
    """Sort by variance (descending, ties by index) and pair neighbours."""
    order = sorted(range(len(variances)), key=lambda i: (-variances[i], i))
    couples = [tuple(order[i : i + 2]) for i in range(0, len(order), 2)]
    return GroupingPlan(tuple(couples))


def gnla_max_pair(
    a: MomentPair, b: MomentPair, leaf_sigmas: tuple[float, float] | None = None
) -> MomentPair:
    """Mean/variance bound on the max of two independent variables with nonnegative means.

    With ``leaf_sigmas`` both operands are taken as zero-mean normals with
    those standard deviations and the sharper normal variance bound is used.
    """
    if a.mean < 0 or b.mean < 0:
        raise ValueError("pairwise max bound needs nonnegative means")
    mean = 0.5 * (a.mean + b.mean) + 0.5 * math.sqrt(a.var + b.var + a.mean**2 + b.mean**2)
    if leaf_sigmas is not None:
        sa, sb = leaf_sigmas
        var = (1 - 1 / math.pi) * (sa * sa + sb * sb) - (2 / math.pi) * sa * sb
    else:
        var = a.var + b.var + 0.5 * a.mean**2 + 0.5 * b.mean**2
    return MomentPair(mean, max(var, 0.0))


def gnla_max_multi(
    operands: Sequence[MomentPair], leaf_sigmas: Sequence[float | None] | None = None
) -> MomentPair:
    """Tournament reduction of the max over centered operands.

    Operands with a ``leaf_sigmas`` entry are independent zero-mean normals
    at the first level; combined results never are.
    """
    if not operands:
        raise ValueError("gnla_max_multi needs at least one operand")
    items = list(operands)
    sig: list[float | None] = list(leaf_sigmas) if leaf_sigmas is not None else [None] * len(items)
    while len(items) > 1:
        plan = group_pairs([mp.var for mp in items])
        nxt: list[MomentPair] = []
        for couple in plan.couples:
            if len(couple) == 1:
                nxt.append(items[couple[0]])
                continue
            i, j = couple
            leaf = (sig[i], sig[j]) if sig[i] is not None and sig[j] is not None else None
            nxt.append(gnla_max_pair(items[i], items[j], leaf))
        sig = [sig[c[0]] if len(c) == 1 else None for c in plan.couples]
        items = nxt
    return items[0]


@dataclass(frozen=True)
class _Node:
    mean: float
    var: float
    normal: bool  # start = constant + sum of independent normal perturbations
    support: frozenset


def gnla_nodes(pos: POS, instance: Instance) -> list[MomentPair]:
    d0 = instance.durations()
    sig = instance.sigmas()
    inc: list[list] = [[] for _ in range(pos.n)]
    for e in pos.reduced_edges:
        inc[e.target].append(e)
    nodes: list[_Node | None] = [None] * pos.n
    for v in pos.topological_order:
        contribs = []
        for e in inc[v]:
            u = nodes[e.source]
            if e.duration_bearing:
                supp = u.support | {e.source} if sig[e.source] > 0 else u.support
                contribs.append(
                    _Node(u.mean + e.lag + d0[e.source], u.var + sig[e.source] ** 2, u.normal, supp)
                )
            else:
                contribs.append(_Node(u.mean + e.lag, u.var, u.normal, u.support))
        if not contribs:
            nodes[v] = _Node(0.0, 0.0, True, frozenset())
        elif len(contribs) == 1:
            nodes[v] = contribs[0]
        else:
            top = max(c.mean for c in contribs)
            leaf = []
            for i, c in enumerate(contribs):
                independent = c.normal and all(
                    not (c.support & o.support) for j, o in enumerate(contribs) if j != i
                )
                leaf.append(math.sqrt(c.var) if independent else None)
            mp = gnla_max_multi([MomentPair(0.0, c.var) for c in contribs], leaf)
            support = frozenset().union(*(c.support for c in contribs))
            nodes[v] = _Node(top + mp.mean, mp.var, False, support)
    return [MomentPair(nd.mean, nd.var) for nd in nodes]


def gnla_eval(pos: POS, instance: Instance) -> MomentPair:
    """Mean/variance bound of the sink start, i.e. of the makespan."""
    return gnla_nodes(pos, instance)[pos.sink]


def rule_moments(pos: POS, instance: Instance, rule: Rule | str, cross_term: str = "exact") -> MomentPair:
    rule = Rule(rule)
    if rule is Rule.GNLA:
        return gnla_eval(pos, instance)
    return sla_form_moments(sla_eval(pos, instance), instance_moments(instance), cross_term)


def pos_fitness(pos: POS, instance: Instance, rule: Rule | str, epsilon: float) -> float:
    return robust_fitness(rule_moments(pos, instance, rule), epsilon)
