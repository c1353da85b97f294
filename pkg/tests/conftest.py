from __future__ import annotations

import itertools
import sys

import numpy as np
import pytest

from robust_rcpsp.generators import random_rcpsp, t1, t2
from robust_rcpsp.model import Activity, Instance, LagKind, TemporalConstraint, normalize


def make_instance(durations, demands, capacities, constraints=(), sigma=0.0):
    """Real activities 1..N with the given durations/demands; dummies added."""
    K = len(capacities)
    acts = [Activity(0, 0.0, 0.0, (0,) * K)]
    for i, (d, r) in enumerate(zip(durations, demands), start=1):
        acts.append(Activity(i, float(d), sigma, tuple(r)))
    acts.append(Activity(len(acts), 0.0, 0.0, (0,) * K))
    return Instance(tuple(acts), tuple(capacities), tuple(constraints))


def MIN(a, b, lag, db=False):
    return TemporalConstraint(a, b, LagKind.MIN, float(lag), db)


def MAX(a, b, lag):
    return TemporalConstraint(a, b, LagKind.MAX, float(lag))


@pytest.fixture
def T1():
    return t1(1.0)


@pytest.fixture
def T2():
    return t2(1.0)


def fixture_suite(count=20, n_max=10, sigma=0.0):
    """Deterministic set of small instances without maximal lags."""
    out = []
    for k in range(count):
        n = 4 + k % (n_max - 3)
        out.append(random_rcpsp(n, 1000 + k, sigma=sigma, name=f"fx{k:02d}"))
    return out


def linearizations(pos, durations, rng, count, max_delay=3):
    """Start vectors consistent with the POS: random topological order plus random integer delays."""
    inc = pos.incoming
    succ = [[] for _ in range(pos.n)]
    indeg = [0] * pos.n
    for e in pos.edges:
        succ[e.source].append(e.target)
        indeg[e.target] += 1
    for _ in range(count):
        deg = list(indeg)
        avail = [v for v in range(pos.n) if deg[v] == 0]
        st = [0.0] * pos.n
        while avail:
            v = avail.pop(int(rng.integers(len(avail))))
            t = max((st[e.source] + e.gap(durations) for e in inc[v]), default=0.0)
            st[v] = t + (int(rng.integers(0, max_delay + 1)) if v != 0 else 0)
            for w in succ[v]:
                deg[w] -= 1
                if deg[w] == 0:
                    avail.append(w)
        yield st


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = mod.summary_lines() if mod is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
