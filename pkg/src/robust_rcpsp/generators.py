"""Seeded instance generators and the two small reference fixtures."""

from __future__ import annotations

import numpy as np

from .model import (
    Activity,
    Instance,
    JspInstance,
    JspOperation,
    LagKind,
    TemporalConstraint,
    normalize,
)
from .schedule import random_activity_list, serial_schedule


def two_activity_instance(capacity: int, sigma: float = 0.0) -> Instance:
    """Activities of duration 3 and 2 sharing one resource of the given capacity."""
    acts = (
        Activity(0, 0.0, 0.0, (0,)),
        Activity(1, 3.0, sigma, (1,)),
        Activity(2, 2.0, sigma, (1,)),
        Activity(3, 0.0, 0.0, (0,)),
    )
    name = "t1" if capacity == 1 else f"t{capacity}"
    return normalize(Instance(acts, (capacity,), (), name=name))


def t1(sigma: float = 0.0) -> Instance:
    return two_activity_instance(1, sigma)


def t2(sigma: float = 0.0) -> Instance:
    return two_activity_instance(2, sigma)


def random_rcpsp(
    n: int,
    seed: int,
    *,
    resources: int = 2,
    capacity: tuple[int, int] = (2, 4),
    duration: tuple[int, int] = (1, 10),
    edge_probability: float = 0.2,
    demand_probability: float = 0.6,
    end_to_start: bool = True,
    max_lags: int = 0,
    sigma: float = 0.0,
    name: str = "",
) -> Instance:
    """Random instance over ``n`` real activities.

    Precedences go from lower to higher ids. With ``end_to_start`` they are
    duration-bearing lag-0 edges, otherwise start-to-start lags equal to
    the nominal predecessor duration. ``max_lags`` maximal lags are added
    with slack around a known feasible schedule so the instance stays
    consistent.
    """
    rng = np.random.default_rng(seed)
    caps = tuple(int(c) for c in rng.integers(capacity[0], capacity[1] + 1, size=resources))
    acts = [Activity(0, 0.0, 0.0, (0,) * resources)]
    for i in range(1, n + 1):
        d = float(rng.integers(duration[0], duration[1] + 1))
        dem = tuple(
            int(rng.integers(1, c + 1)) if rng.random() < demand_probability else 0 for c in caps
        )
        acts.append(Activity(i, d, sigma, dem))
    acts.append(Activity(n + 1, 0.0, 0.0, (0,) * resources))
    cons = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if rng.random() < edge_probability:
                if end_to_start:
                    cons.append(TemporalConstraint(i, j, LagKind.MIN, 0.0, duration_bearing=True))
                else:
                    cons.append(TemporalConstraint(i, j, LagKind.MIN, acts[i].mean_duration))
    inst = normalize(Instance(tuple(acts), caps, tuple(cons), name=name or f"rnd{n}-{seed}"))
    if max_lags and n >= 2:
        sched = serial_schedule(inst, random_activity_list(inst, rng))
        st = sched.starts
        extra = []
        real = list(inst.real_ids)
        for _ in range(max_lags):
            a, b = (int(x) for x in rng.choice(real, size=2, replace=False))
            if st[a] > st[b]:
                a, b = b, a
            slack = float(rng.integers(0, 4))
            extra.append(TemporalConstraint(a, b, LagKind.MAX, st[b] - st[a] + slack))
        inst = inst.with_constraints(extra)
    return inst


def random_jsp(jobs: int, machines: int, seed: int, low: int = 1, high: int = 99, sigma: float = 0.0) -> JspInstance:
    """Each job visits every machine once in random order; durations uniform on ``[low, high]``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(jobs):
        route = rng.permutation(machines)
        out.append(tuple(JspOperation(int(m), float(rng.integers(low, high + 1)), sigma) for m in route))
    return JspInstance(tuple(out), machines)
