"""Readers and writers: native JSON instances, ProGen/max ``.sch`` files and
a plain-text job-shop format."""

from __future__ import annotations

import json
import re
from typing import Any

from .model import (
    Activity,
    Instance,
    JspInstance,
    JspOperation,
    LagKind,
    TemporalConstraint,
)

NATIVE_VERSION = 1


class ParseError(ValueError):
    """Syntax error in an input document; ``line``/``field`` locate it when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


# ---------------------------------------------------------------------------
# native format


def _require(doc: dict, key: str, where: str = "") -> Any:
    if key not in doc:
        raise ParseError(f"missing required field '{key}'{where}", field=key)
    return doc[key]


def _number(value: Any, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", field=field)
    return float(value)


def _integer(value: Any, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {value!r}", field=field)
    return value


def parse_native(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("top-level document must be an object")
    version = _require(doc, "version")
    if version != NATIVE_VERSION:
        raise ParseError(f"unsupported version {version!r}", field="version")
    caps_raw = _require(doc, "resources")
    if not isinstance(caps_raw, list):
        raise ParseError("expected a list of capacities", field="resources")
    capacities = tuple(_integer(c, "resources") for c in caps_raw)
    K = len(capacities)

    acts_raw = _require(doc, "activities")
    if not isinstance(acts_raw, list):
        raise ParseError("expected a list", field="activities")
    by_id: dict[int, Activity] = {}
    for pos, a in enumerate(acts_raw):
        where = f"activities[{pos}]"
        if not isinstance(a, dict):
            raise ParseError("expected an object", field=where)
        aid = _integer(_require(a, "id", f" in {where}"), f"{where}.id")
        d0 = _number(_require(a, "d0", f" in {where}"), f"{where}.d0")
        sigma = _number(a.get("sigma", 0.0), f"{where}.sigma")
        demands = a.get("demands", [0] * K)
        if not isinstance(demands, list):
            raise ParseError("expected a list", field=f"{where}.demands")
        if aid in by_id:
            raise ParseError(f"duplicate activity id {aid}", field=where)
        by_id[aid] = Activity(aid, d0, sigma, tuple(_integer(r, f"{where}.demands") for r in demands))

    # dummies are optional: without id 0 the listed ids are the real activities 1..N
    if 0 not in by_id:
        by_id[0] = Activity(0, 0.0, 0.0, (0,) * K)
        sink = max(by_id) + 1
        by_id[sink] = Activity(sink, 0.0, 0.0, (0,) * K)
    elif len(by_id) < 2:
        raise ParseError("document lists the source but no sink", field="activities")
    ids = sorted(by_id)
    if ids != list(range(len(ids))):
        raise ParseError("activity ids must be contiguous", field="activities")
    activities = tuple(by_id[i] for i in ids)

    cons_raw = doc.get("constraints", [])
    if not isinstance(cons_raw, list):
        raise ParseError("expected a list", field="constraints")
    constraints = []
    for pos, c in enumerate(cons_raw):
        where = f"constraints[{pos}]"
        if not isinstance(c, dict):
            raise ParseError("expected an object", field=where)
        kind = _require(c, "kind", f" in {where}")
        if kind not in ("min", "max"):
            raise ParseError(f"kind must be 'min' or 'max', got {kind!r}", field=f"{where}.kind")
        constraints.append(
            TemporalConstraint(
                _integer(_require(c, "from", f" in {where}"), f"{where}.from"),
                _integer(_require(c, "to", f" in {where}"), f"{where}.to"),
                LagKind(kind),
                _number(_require(c, "lag", f" in {where}"), f"{where}.lag"),
                bool(c.get("duration_bearing", False)),
            )
        )
    return Instance(activities, capacities, tuple(constraints), name=str(doc.get("name", "")))


def instance_to_dict(instance: Instance) -> dict:
    doc: dict[str, Any] = {"version": NATIVE_VERSION}
    if instance.name:
        doc["name"] = instance.name
    doc["resources"] = list(instance.capacities)
    doc["activities"] = [
        {"id": a.id, "d0": a.mean_duration, "sigma": a.sigma, "demands": list(a.demands)}
        for a in instance.activities
    ]
    cons = []
    for c in instance.constraints:
        entry = {"from": c.source, "to": c.target, "kind": c.kind.value, "lag": c.lag}
        if c.duration_bearing:
            entry["duration_bearing"] = True
        cons.append(entry)
    doc["constraints"] = cons
    return doc


def write_native(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=1) + "\n"


# ---------------------------------------------------------------------------
# ProGen/max

_BRACKETS = re.compile(r"[\[\]]")

PROGEN_LAYOUT = (
    "expected ProGen/max layout: header 'N K_r K_n K_d', N+2 precedence lines "
    "'id mode #succ succ... [lag]...', N+2 requirement lines 'id mode duration demands...', "
    "then one capacities line"
)


def _ints(line: str, lineno: int) -> list[int]:
    out = []
    for tok in _BRACKETS.sub(" ", line).split():
        try:
            out.append(int(tok))
        except ValueError:
            try:
                f = float(tok)
            except ValueError:
                raise ParseError(f"non-numeric token {tok!r}", line=lineno) from None
            if not f.is_integer():
                raise ParseError(f"non-integer token {tok!r}", line=lineno)
            out.append(int(f))
    return out


def parse_progen_max(text: str, name: str = "") -> Instance:
    """Read a single-mode ProGen/max ``.sch`` file.

    Successor arcs with nonnegative weight become MIN lags; a negative
    weight ``w`` on arc ``i -> j`` becomes the MAX lag ``st(i) - st(j) <= -w``.
    Every sigma is 0 and has to be assigned afterwards.
    """
    lines = [(no, ln) for no, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise ParseError("malformed header: empty document; " + PROGEN_LAYOUT, line=1)
    head_no, head = lines[0]
    header = _ints(head, head_no)
    if len(header) < 4:
        raise ParseError("malformed header: " + PROGEN_LAYOUT, line=head_no)
    N, K, Kn, Kd = header[:4]
    if N < 0 or K < 0:
        raise ParseError("malformed header: negative counts", line=head_no)
    if Kn or Kd:
        raise ParseError("non-renewable and doubly-constrained resources are not supported", line=head_no)
    body = lines[1:]
    expected = 2 * (N + 2) + 1
    if len(body) != expected:
        raise ParseError(
            f"activity count mismatch: header declares N={N}, so {expected} body lines are "
            f"expected, found {len(body)}; " + PROGEN_LAYOUT,
            line=head_no,
        )

    constraints = []
    for idx in range(N + 2):
        no, ln = body[idx]
        vals = _ints(ln, no)
        if len(vals) < 3 or vals[0] != idx:
            raise ParseError(f"activity count mismatch: expected precedence line for activity {idx}", line=no)
        nsucc = vals[2]
        if len(vals) != 3 + 2 * nsucc:
            raise ParseError(f"expected {nsucc} successors and {nsucc} lags", line=no)
        succ = vals[3 : 3 + nsucc]
        lags = vals[3 + nsucc :]
        for j, w in zip(succ, lags):
            if not 0 <= j < N + 2:
                raise ParseError(f"successor {j} out of range", line=no)
            if w >= 0:
                constraints.append(TemporalConstraint(idx, j, LagKind.MIN, float(w)))
            else:
                constraints.append(TemporalConstraint(j, idx, LagKind.MAX, float(-w)))

    activities = []
    for idx in range(N + 2):
        no, ln = body[N + 2 + idx]
        vals = _ints(ln, no)
        if len(vals) != 3 + K or vals[0] != idx:
            raise ParseError(
                f"activity count mismatch: expected requirement line 'id mode duration {K} demands' "
                f"for activity {idx}",
                line=no,
            )
        activities.append(Activity(idx, float(vals[2]), 0.0, tuple(vals[3:])))

    no, ln = body[-1]
    caps = _ints(ln, no)
    if len(caps) != K:
        raise ParseError(f"expected {K} capacities", line=no)
    return Instance(tuple(activities), tuple(caps), tuple(constraints), name=name)


def _fmt_int(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    raise ValueError(f"ProGen/max needs integral values, got {x}")


def write_progen_max(instance: Instance) -> str:
    """Emit a ``.sch`` document.

    Sigmas are dropped. A duration-bearing MIN lag is written as the
    start-to-start lag ``lag + d0``, which is exact at nominal durations only.
    """
    n = instance.n_nodes
    arcs: dict[int, list[tuple[int, float]]] = {i: [] for i in range(n)}
    d0 = instance.durations()
    for c in instance.constraints:
        if c.kind is LagKind.MIN:
            lag = c.lag + d0[c.source] if c.duration_bearing else c.lag
            arcs[c.source].append((c.target, lag))
        else:
            arcs[c.target].append((c.source, -c.lag))
    out = [f"{instance.n_real}\t{instance.n_resources}\t0\t0"]
    for i in range(n):
        succ = arcs[i]
        parts = [str(i), "1", str(len(succ))]
        parts += [str(j) for j, _ in succ]
        parts += [f"[{_fmt_int(w)}]" for _, w in succ]
        out.append("\t".join(parts))
    for a in instance.activities:
        out.append("\t".join([str(a.id), "1", _fmt_int(a.mean_duration), *map(str, a.demands)]))
    out.append("\t".join(map(str, instance.capacities)))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# job shop text


def parse_jsp(text: str) -> JspInstance:
    """Header ``n M`` then one line per job of ``machine duration`` pairs
    (parentheses and commas are ignored)."""
    lines = [(no, ln) for no, ln in enumerate(text.splitlines(), start=1) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError("empty job-shop document", line=1)
    clean = re.compile(r"[(),]")

    def nums(no: int, ln: str) -> list[float]:
        out = []
        for tok in clean.sub(" ", ln).split():
            try:
                out.append(float(tok))
            except ValueError:
                raise ParseError(f"non-numeric token {tok!r}", line=no) from None
        return out

    head = nums(*lines[0])
    if len(head) != 2 or not all(h.is_integer() and h > 0 for h in head):
        raise ParseError("header must be 'n M' with positive integers", line=lines[0][0])
    n, M = int(head[0]), int(head[1])
    if len(lines) - 1 != n:
        raise ParseError(f"expected {n} job lines, found {len(lines) - 1}", line=lines[0][0])
    jobs = []
    for no, ln in lines[1:]:
        vals = nums(no, ln)
        if not vals or len(vals) % 2:
            raise ParseError("job line must hold (machine, duration) pairs", line=no)
        ops = []
        for m, d in zip(vals[::2], vals[1::2]):
            if not m.is_integer() or not 0 <= m < M:
                raise ParseError(f"machine {m} outside 0..{M - 1}", line=no)
            if d < 0:
                raise ParseError("negative duration", line=no)
            ops.append(JspOperation(int(m), d))
        jobs.append(tuple(ops))
    return JspInstance(tuple(jobs), M)


def write_jsp(jsp: JspInstance) -> str:
    out = [f"{len(jsp.jobs)} {jsp.machine_count}"]
    for job in jsp.jobs:
        out.append(" ".join(f"{op.machine} {op.duration:g}" for op in job))
    return "\n".join(out) + "\n"
