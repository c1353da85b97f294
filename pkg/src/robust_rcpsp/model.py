"""Domain types for RCPSP/max instances with uncertain durations.

Activities are indexed ``0..N+1`` where ``0`` is the dummy source and
``N+1`` the dummy sink. All time lags are start-to-start; a constraint may
additionally be flagged ``duration_bearing``, in which case the lag is
measured from the *end* of its source activity (used for job-shop
precedences and for the sink edges that define the makespan).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence


class LagKind(str, enum.Enum):
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class Activity:
    id: int
    mean_duration: float
    sigma: float = 0.0
    demands: tuple[int, ...] = ()


@dataclass(frozen=True)
class TemporalConstraint:
    """``st(target) - st(source) >= lag`` (MIN) or ``<= lag`` (MAX).

    With ``duration_bearing`` set (MIN only) the realized duration of
    ``source`` is added to the lag.
    """

    source: int
    target: int
    kind: LagKind
    lag: float
    duration_bearing: bool = False

    def gap(self, durations: Sequence[float]) -> float:
        """Effective lag given realized durations."""
        if self.duration_bearing:
            return self.lag + durations[self.source]
        return self.lag

    def satisfied(self, starts: Sequence[float], durations: Sequence[float], tol: float = 1e-9) -> bool:
        diff = starts[self.target] - starts[self.source]
        if self.kind is LagKind.MIN:
            return diff >= self.gap(durations) - tol
        return diff <= self.lag + tol


@dataclass(frozen=True)
class Instance:
    activities: tuple[Activity, ...]
    capacities: tuple[int, ...]
    constraints: tuple[TemporalConstraint, ...] = ()
    name: str = ""

    @property
    def n_real(self) -> int:
        return len(self.activities) - 2

    @property
    def n_nodes(self) -> int:
        return len(self.activities)

    @property
    def sink(self) -> int:
        return len(self.activities) - 1

    @property
    def n_resources(self) -> int:
        return len(self.capacities)

    @property
    def real_ids(self) -> range:
        return range(1, len(self.activities) - 1)

    def durations(self) -> list[float]:
        return [a.mean_duration for a in self.activities]

    def sigmas(self) -> list[float]:
        return [a.sigma for a in self.activities]

    def precedences(self) -> list[TemporalConstraint]:
        """MIN constraints with nonnegative lag; these orient activity lists and POS edges."""
        return [c for c in self.constraints if c.kind is LagKind.MIN and c.lag >= 0]

    def max_lags(self) -> list[TemporalConstraint]:
        """Every upper-bound constraint, with negative MIN lags rewritten as MAX lags."""
        out = []
        for c in self.constraints:
            if c.kind is LagKind.MAX:
                out.append(c)
            elif c.lag < 0 and not c.duration_bearing:
                out.append(TemporalConstraint(c.target, c.source, LagKind.MAX, -c.lag))
        return out

    @property
    def has_max_lags(self) -> bool:
        return bool(self.max_lags())

    def with_sigma(self, sigma: float | Sequence[float]) -> Instance:
        """Copy with every real activity's sigma replaced (constant or per activity)."""
        acts = []
        for a in self.activities:
            if a.id == 0 or a.id == self.sink:
                acts.append(a)
                continue
            s = sigma if isinstance(sigma, (int, float)) else sigma[a.id]
            acts.append(replace(a, sigma=float(s)))
        return replace(self, activities=tuple(acts))

    def with_constraints(self, extra: Iterable[TemporalConstraint]) -> Instance:
        return replace(self, constraints=self.constraints + tuple(extra))


@dataclass(frozen=True)
class Schedule:
    starts: tuple[float, ...]

    def makespan(self, durations: Sequence[float]) -> float:
        n = len(self.starts)
        return max((self.starts[i] + durations[i] for i in range(1, n - 1)), default=0.0)


@dataclass(frozen=True)
class JspOperation:
    machine: int
    duration: float
    sigma: float = 0.0


@dataclass(frozen=True)
class JspInstance:
    jobs: tuple[tuple[JspOperation, ...], ...]
    machine_count: int


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class InvalidInstance(ValueError):
    pass


def validate_instance(instance: Instance) -> ValidationReport:
    report = ValidationReport()
    v = report.violations
    acts = instance.activities
    if len(acts) < 2:
        v.append("instance needs at least the two dummy activities")
        return report
    ids = [a.id for a in acts]
    if len(set(ids)) != len(ids):
        v.append("duplicate activity ids")
    if ids != list(range(len(acts))):
        v.append("activity ids must be contiguous 0..N+1 in order")
    K = instance.n_resources
    for c in instance.capacities:
        if c <= 0:
            v.append(f"capacity {c} must be positive")
    sink = instance.sink
    for a in acts:
        if a.mean_duration < 0:
            v.append(f"activity {a.id}: negative duration")
        if a.sigma < 0:
            v.append(f"activity {a.id}: negative sigma")
        if len(a.demands) != K:
            v.append(f"activity {a.id}: expected {K} demands, got {len(a.demands)}")
            continue
        if a.id in (0, sink):
            if a.mean_duration != 0:
                v.append(f"activity {a.id}: dummy duration must be 0")
            if a.sigma != 0:
                v.append(f"activity {a.id}: dummy sigma must be 0")
            if any(a.demands):
                v.append(f"activity {a.id}: dummy demands must be 0")
            continue
        for k, (r, cap) in enumerate(zip(a.demands, instance.capacities)):
            if r < 0:
                v.append(f"activity {a.id}: negative demand on resource {k}")
            elif r > cap:
                v.append(f"activity {a.id}: demand exceeds capacity on resource {k} ({r} > {cap})")
    n = len(acts)
    for c in instance.constraints:
        if c.source == c.target:
            v.append(f"self-loop constraint on activity {c.source}")
        if not (0 <= c.source < n and 0 <= c.target < n):
            v.append(f"constraint {c.source}->{c.target} references unknown activity")
        if c.duration_bearing and c.kind is LagKind.MAX:
            v.append(f"constraint {c.source}->{c.target}: duration-bearing MAX lag not supported")
        if not math.isfinite(c.lag):
            v.append(f"constraint {c.source}->{c.target}: lag must be finite")
    return report


def normalize(instance: Instance) -> Instance:
    """Anchor every real activity to the source and the sink.

    A lag-0 MIN edge from the source is added to activities without an
    incoming precedence; a duration-bearing lag-0 edge to the sink is added
    to activities without an outgoing duration-bearing edge, so that the
    sink start is never below the makespan. Idempotent.
    """
    report = validate_instance(instance)
    if not report.ok:
        raise InvalidInstance("; ".join(report.violations))
    sink = instance.sink
    has_in = set()
    has_db_out = set()
    for c in instance.precedences():
        has_in.add(c.target)
        if c.duration_bearing:
            has_db_out.add(c.source)
    extra = []
    for i in instance.real_ids:
        if i not in has_in:
            extra.append(TemporalConstraint(0, i, LagKind.MIN, 0.0))
        if i not in has_db_out:
            extra.append(TemporalConstraint(i, sink, LagKind.MIN, 0.0, duration_bearing=True))
    if instance.n_real == 0 and not any(c.source == 0 and c.target == sink for c in instance.constraints):
        extra.append(TemporalConstraint(0, sink, LagKind.MIN, 0.0))
    if not extra:
        return instance
    return instance.with_constraints(extra)


# ---------------------------------------------------------------------------
# deterministic feasibility


@dataclass(frozen=True)
class ResourceViolation:
    resource: int
    start: float
    end: float
    usage: int
    capacity: int


@dataclass
class FeasibilityReport:
    temporal_violations: list[TemporalConstraint]
    resource_violations: list[ResourceViolation]
    makespan: float

    @property
    def ok(self) -> bool:
        return not self.temporal_violations and not self.resource_violations


def check_schedule(
    instance: Instance, schedule: Schedule | Sequence[float], durations: Sequence[float] | None = None
) -> FeasibilityReport:
    """Check every lag and the cumulative resource profile of a start-time vector.

    Activities occupy ``[start, start + duration)``; overflow segments are
    reported merged per resource.
    """
    starts = schedule.starts if isinstance(schedule, Schedule) else tuple(schedule)
    if durations is None:
        durations = instance.durations()
    if not all(math.isfinite(s) for s in starts):
        raise ValueError("start times must be finite")
    temporal = [c for c in instance.constraints if not c.satisfied(starts, durations)]

    resource: list[ResourceViolation] = []
    for k, cap in enumerate(instance.capacities):
        events: dict[float, int] = {}
        for i in instance.real_ids:
            r = instance.activities[i].demands[k]
            d = durations[i]
            if r == 0 or d <= 0:
                continue
            s = starts[i]
            events[s] = events.get(s, 0) + r
            events[s + d] = events.get(s + d, 0) - r
        usage = 0
        times = sorted(events)
        open_seg: list | None = None
        for t0, t1 in zip(times, times[1:] + [math.inf]):
            usage += events[t0]
            if usage > cap and t1 > t0:
                if open_seg is not None and open_seg[1] == t0:
                    open_seg[1] = t1
                    open_seg[2] = max(open_seg[2], usage)
                else:
                    if open_seg is not None:
                        resource.append(ResourceViolation(k, open_seg[0], open_seg[1], open_seg[2], cap))
                    open_seg = [t0, t1, usage]
        if open_seg is not None:
            resource.append(ResourceViolation(k, open_seg[0], open_seg[1], open_seg[2], cap))

    makespan = max((starts[i] + durations[i] for i in instance.real_ids), default=0.0)
    return FeasibilityReport(temporal, resource, makespan)


# ---------------------------------------------------------------------------
# job shop


def jsp_to_rcpsp(jsp: JspInstance, name: str = "") -> Instance:
    """One unary resource per machine; consecutive operations of a job are
    linked end-to-start by duration-bearing lag-0 precedences."""
    if jsp.machine_count <= 0:
        raise InvalidInstance("machine_count must be positive")
    M = jsp.machine_count
    acts = [Activity(0, 0.0, 0.0, (0,) * M)]
    cons: list[TemporalConstraint] = []
    for j, job in enumerate(jsp.jobs):
        if not job:
            raise InvalidInstance(f"job {j} has no operations")
        prev = None
        for op in job:
            if not 0 <= op.machine < M:
                raise InvalidInstance(f"job {j}: machine {op.machine} outside 0..{M - 1}")
            demands = tuple(1 if m == op.machine else 0 for m in range(M))
            aid = len(acts)
            acts.append(Activity(aid, float(op.duration), float(op.sigma), demands))
            if prev is not None:
                cons.append(TemporalConstraint(prev, aid, LagKind.MIN, 0.0, duration_bearing=True))
            prev = aid
    acts.append(Activity(len(acts), 0.0, 0.0, (0,) * M))
    return Instance(tuple(acts), (1,) * M, tuple(cons), name=name)
