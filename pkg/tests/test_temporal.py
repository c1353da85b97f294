from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MAX, MIN, make_instance
from robust_rcpsp.model import check_schedule
from robust_rcpsp.temporal import (
    TemporalInfeasible,
    build_and_close,
    default_horizon,
    fix_start,
    floyd_warshall,
    reclose,
    windows,
)


def chain3():
    # 0 -> 1 (lag 0) -> 2 (lag 3)
    return make_instance([3, 2], [(0,), (0,)], [1], [MIN(0, 1, 0), MIN(1, 2, 3)])


def test_chain_est():
    w = windows(build_and_close(chain3(), 100))
    assert w.est[:3] == (0, 0, 3)
    assert w.consistent


def test_min_max_conflict_cycle():
    inst = make_instance([1, 1], [(0,), (0,)], [1], [MIN(1, 2, 5), MAX(1, 2, 4)])
    with pytest.raises(TemporalInfeasible) as err:
        build_and_close(inst, 100)
    cyc = err.value.cycle
    assert cyc[0] == cyc[-1] and set(cyc) == {1, 2}


def test_unconstrained_windows():
    inst = make_instance([1, 1], [(0,), (0,)], [1])
    w = windows(build_and_close(inst, 10))
    assert [w[i] for i in (1, 2)] == [(0, 10), (0, 10)]


def test_single_activity_horizon():
    assert windows(build_and_close(make_instance([1], [(0,)], [1]), 7))[1] == (0, 7)


def test_fix_collapses_window_and_propagates():
    g = build_and_close(chain3(), 100)
    g1 = fix_start(g, 1, 0)
    assert windows(g1)[1] == (0, 0)
    assert windows(g1).est[2] == 3
    g2 = fix_start(g, 1, 2)
    assert windows(g2)[1] == (2, 2)


def test_fix_conflict_raises():
    g = build_and_close(chain3(), 100)
    # st2 = 2 forces st1 <= -1
    with pytest.raises(TemporalInfeasible):
        fix_start(g, 2, 2)
    g = fix_start(g, 1, 5)
    assert windows(g).est[2] == 8
    with pytest.raises(TemporalInfeasible):
        fix_start(g, 2, 7)


def test_fix_source_is_noop():
    g = build_and_close(chain3(), 100)
    assert np.array_equal(fix_start(g, 0, 0).weight, g.weight)


def test_default_horizon():
    assert default_horizon(chain3()) == 3 + 2 + 3


def _random_small(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    cons = []
    for _ in range(int(rng.integers(0, 5))):
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False) + 1) if n > 1 else (0, 1)
        if a == b:
            continue
        if rng.random() < 0.6:
            cons.append(MIN(a, b, int(rng.integers(-2, 5)), db=bool(rng.random() < 0.3)))
        else:
            cons.append(MAX(a, b, int(rng.integers(0, 6))))
    durs = [int(x) for x in rng.integers(0, 4, size=n)]
    return make_instance(durs, [(0,)] * n, [1], cons), int(rng.integers(3, 13))


def _brute(inst, H):
    n = inst.n_real
    durs = [int(np.ceil(d)) for d in inst.durations()]
    feas = []
    for assign in itertools.product(range(H + 1), repeat=n):
        st = (0,) + assign + (0,)
        ok = True
        for c in inst.constraints:
            if c.target == inst.sink or c.source == inst.sink:
                continue
            diff = st[c.target] - st[c.source]
            need = c.lag + (durs[c.source] if c.duration_bearing else 0)
            if (c.kind.value == "min" and diff < need) or (c.kind.value == "max" and diff > c.lag):
                ok = False
                break
        if ok:
            feas.append(assign)
    return feas


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_windows_match_brute_force(seed):
    inst, H = _random_small(seed)
    feas = _brute(inst, H)
    try:
        w = windows(build_and_close(inst, H))
    except TemporalInfeasible:
        assert not feas
        return
    assert feas
    for i in range(inst.n_real):
        vals = [f[i] for f in feas]
        assert w.est[i + 1] == min(vals)
        assert w.lst[i + 1] == max(vals)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_incremental_fix_equals_full_closure_and_yields_valid_starts(seed):
    inst, H = _random_small(seed)
    try:
        g = build_and_close(inst, H)
    except TemporalInfeasible:
        return
    rng = np.random.default_rng(seed)
    starts = [0.0] * inst.n_nodes
    for a in inst.real_ids:
        lo, hi = windows(g)[a]
        t = int(rng.integers(int(lo), int(hi) + 1))
        g = fix_start(g, a, t)
        assert np.array_equal(g.weight, reclose(g).weight)
        starts[a] = t
    assert np.array_equal(floyd_warshall(g.weight), g.weight)  # idempotent closure
    durs = [float(np.ceil(d)) for d in inst.durations()]
    real = [c for c in inst.constraints if inst.sink not in (c.source, c.target)]
    assert all(c.satisfied(starts, durs) for c in real)
