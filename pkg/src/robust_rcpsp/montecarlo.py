"""Monte Carlo execution of a POS under sampled durations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Instance, LagKind, Schedule, TemporalConstraint, check_schedule
from .pos import POS, earliest_start_batch

BLOCK = 1000
QUANTILE_EPS = (0.01, 0.05, 0.1, 0.2)
TOL = 1e-9


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Stream for one block of samples; independent of how blocks are distributed."""
    return np.random.default_rng([seed, block])


def sample_durations(instance: Instance, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """``max(0, d0 + N(0, sigma))`` per activity; a ``(n, N+2)`` matrix when ``n`` is given."""
    d0 = np.asarray(instance.durations(), dtype=float)
    sig = np.asarray(instance.sigmas(), dtype=float)
    shape = d0.shape if n is None else (n, d0.size)
    return np.maximum(0.0, d0 + rng.standard_normal(shape) * sig)


def execute_batch(pos: POS, instance: Instance, durations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Earliest-start execution of every row of ``durations``.

    Maximal lags are enforced by pushing the earlier activity later until
    all constraints hold. Rows where that never settles (a positive cycle)
    keep the plain POS earliest start and are flagged infeasible together
    with rows that break an original constraint. Returns ``(starts, infeasible)``.
    """
    dag = earliest_start_batch(pos, durations)
    st = dag.copy()
    maxes = instance.max_lags()
    m = durations.shape[0]
    unsettled = np.zeros(m, dtype=bool)
    if maxes:
        inc = pos.incoming
        for _ in range(pos.n + 1):
            before = st.copy()
            for c in maxes:
                np.maximum(st[:, c.source], st[:, c.target] - c.lag, out=st[:, c.source])
            for v in pos.topological_order:
                col = st[:, v]
                for e in inc[v]:
                    cand = st[:, e.source] + e.lag
                    if e.duration_bearing:
                        cand = cand + durations[:, e.source]
                    np.maximum(col, cand, out=col)
            unsettled = np.any(st != before, axis=1)
            if not unsettled.any():
                break
        st[unsettled] = dag[unsettled]
    infeasible = unsettled | violation_mask(instance, st, durations)
    return st, infeasible


def violation_mask(instance: Instance, starts: np.ndarray, durations: np.ndarray) -> np.ndarray:
    bad = np.zeros(starts.shape[0], dtype=bool)
    for c in instance.constraints:
        diff = starts[:, c.target] - starts[:, c.source]
        if c.kind is LagKind.MIN:
            gap = c.lag + (durations[:, c.source] if c.duration_bearing else 0.0)
            bad |= diff < gap - TOL
        else:
            bad |= diff > c.lag + TOL
    return bad


def execute_pos(
    pos: POS, instance: Instance, durations: Sequence[float]
) -> tuple[Schedule, list[TemporalConstraint]]:
    """Single realization: the executed schedule and the original lags it violates."""
    d = np.asarray(durations, dtype=float)[None, :]
    st, _ = execute_batch(pos, instance, d)
    starts = tuple(float(x) for x in st[0])
    report = check_schedule(instance, starts, list(d[0]))
    return Schedule(starts), report.temporal_violations


@dataclass
class EvaluationReport:
    samples: int
    epsilon: float
    robust_makespan: float
    mean: float
    variance: float
    quantiles: dict[float, float]
    violation_rate: float
    violation_rate_feasible: float
    infeasibility_probability: float
    mnpm: float | None = None
    makespans: np.ndarray = field(default=None, repr=False)

    @property
    def quantile(self) -> float:
        """Empirical ``1 - epsilon`` quantile of the realized makespan."""
        return self.quantiles[self.epsilon]


def empirical_quantile(values: np.ndarray, q: float) -> float:
    return float(np.quantile(values, q, method="higher"))


def simulate(pos: POS, instance: Instance, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Makespans and infeasibility flags of ``n`` sampled executions."""
    if n < 1:
        raise ValueError("need at least one sample")
    spans = []
    flags = []
    for b in range(math.ceil(n / BLOCK)):
        size = min(BLOCK, n - b * BLOCK)
        d = sample_durations(instance, block_rng(seed, b), size)
        st, bad = execute_batch(pos, instance, d)
        spans.append(st[:, pos.sink])
        flags.append(bad)
    return np.concatenate(spans), np.concatenate(flags)


def evaluate_pos(
    pos: POS,
    instance: Instance,
    n: int,
    epsilon: float,
    robust_makespan: float,
    seed: int = 0,
    lower_bound: float | None = None,
) -> EvaluationReport:
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon out of (0,1]")
    if lower_bound is not None and lower_bound <= 0:
        raise ValueError("lower bound must be positive")
    spans, bad = simulate(pos, instance, n, seed)
    over = spans > robust_makespan + TOL
    feasible = ~bad
    grid = sorted(set(QUANTILE_EPS) | {epsilon})
    quantiles = {e: empirical_quantile(spans, 1 - e) for e in grid}
    rate_feasible = float(over[feasible].mean()) if feasible.any() else float("nan")
    mnpm = quantiles[epsilon] / lower_bound if lower_bound is not None else None
    return EvaluationReport(
        samples=n,
        epsilon=epsilon,
        robust_makespan=robust_makespan,
        mean=float(spans.mean()),
        variance=float(spans.var()),
        quantiles=quantiles,
        violation_rate=float(over.mean()),
        violation_rate_feasible=rate_feasible,
        infeasibility_probability=float(bad.mean()),
        mnpm=mnpm,
        makespans=spans,
    )


def mean_normalized_makespan(makespans: Sequence[float], lower_bounds: Sequence[float]) -> float:
    """Average over instances of makespan divided by that instance's lower bound."""
    if len(makespans) != len(lower_bounds) or not makespans:
        raise ValueError("need one lower bound per makespan")
    if any(lb <= 0 for lb in lower_bounds):
        raise ValueError("lower bound must be positive")
    return float(np.mean([m / lb for m, lb in zip(makespans, lower_bounds)]))
