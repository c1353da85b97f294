"""Command line front-end: solve, evaluate, bench, convert.

Exit codes: 0 success, 1 input or usage error, 2 no feasible activity list found.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .formats import ParseError, instance_to_dict, parse_jsp, parse_native, parse_progen_max, write_native
from .model import Instance, InvalidInstance, jsp_to_rcpsp, normalize, validate_instance
from .montecarlo import evaluate_pos
from .pos import POS, pos_from_dict
from .rules import Rule, rule_moments, robust_fitness
from .search import SearchConfig, pairs_selection, result_to_dict, robust_local_search
from .temporal import TemporalInfeasible

EXIT_OK, EXIT_ERROR, EXIT_NO_FEASIBLE = 0, 1, 2

EVAL_HEADER = [
    "instance", "rule", "epsilon", "sigma", "samples", "robust_makespan", "quantile",
    "violation_rate", "violation_rate_feasible", "ipr", "mnpm", "mean", "variance", "wall_time",
]
BENCH_HEADER = [
    "row_type", "instance", "variant", "sigma", "epsilon", "repeat", "seed", "iterations",
    "robust_makespan", "feasible_fraction", "found", "wall_time",
]
VARIANTS = ("sla", "gnla", "gnla+rc", "gnla+og", "gnla+og+rc", "gnla+")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors share the input-error exit code
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list
    inputs: list
    outputs: list = field(default_factory=list)
    version: str = __version__
    wall_time: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["wall_time"] is None:
            del d["wall_time"]
        return d


# ---------------------------------------------------------------------------
# input helpers


def detect_format(path: Path, fmt: str | None) -> str:
    if fmt and fmt != "auto":
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".sch":
        return "progen-max"
    if suffix in (".jsp", ".txt"):
        return "jsp"
    return "native"


def load_instance(path: str | Path, fmt: str | None = None) -> Instance:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    kind = detect_format(path, fmt)
    try:
        if kind == "native":
            inst = parse_native(text)
        elif kind == "progen-max":
            inst = parse_progen_max(text, name=path.stem)
        elif kind == "jsp":
            inst = jsp_to_rcpsp(parse_jsp(text), name=path.stem)
        else:
            raise CliError(f"unknown input format {kind!r}")
    except (ParseError, InvalidInstance) as exc:
        raise CliError(f"{path}: {exc}") from None
    if not inst.name:
        inst = replace(inst, name=path.stem)
    report = validate_instance(inst)
    if not report.ok:
        raise CliError(f"{path}: invalid instance: " + "; ".join(report.violations))
    return normalize(inst)


def apply_sigma(inst: Instance, sigma: float | None, mode: str | None) -> Instance:
    if sigma is not None and mode is not None:
        raise CliError("use either --sigma or --sigma-mode")
    if sigma is not None:
        if sigma < 0:
            raise CliError("sigma must be nonnegative")
        return inst.with_sigma(sigma)
    if mode is not None:
        kind, _, val = mode.partition(":")
        try:
            f = float(val)
        except ValueError:
            raise CliError(f"bad --sigma-mode {mode!r}, expected proportional:<factor>") from None
        if kind != "proportional" or f < 0:
            raise CliError(f"bad --sigma-mode {mode!r}, expected proportional:<factor>")
        return inst.with_sigma([f * a.mean_duration for a in inst.activities])
    return inst


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _check_epsilon(eps: float) -> None:
    if not 0 < eps <= 1:
        raise CliError("epsilon out of (0,1]")


def _write(text: str, dest: str | None) -> None:
    if dest is None or dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _search_config(args, rule=None, seed=None, **over) -> SearchConfig:
    try:
        return SearchConfig(
            rule=Rule(rule or args.rule),
            epsilon=args.epsilon if "epsilon" not in over else over.pop("epsilon"),
            max_iterations=args.iterations,
            retries=args.retries,
            seed=args.seed if seed is None else seed,
            chaining=args.chaining,
            ordering=over.pop("ordering", getattr(args, "og", False)),
            feedback=over.pop("feedback", getattr(args, "rc", False)),
            og_samples=args.og_samples,
            og_index_parameter=args.ip,
            strict=args.strict,
            horizon=args.horizon,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    _check_epsilon(args.epsilon)
    inst = apply_sigma(load_instance(args.instance, args.format), args.sigma, args.sigma_mode)
    cfg = _search_config(args)
    t0 = time.perf_counter()
    try:
        result = robust_local_search(inst, cfg)
    except TemporalInfeasible as exc:
        raise CliError(f"temporal constraints are inconsistent (cycle {list(exc.cycle)})") from None
    doc = result_to_dict(result)
    doc["instance"] = inst.name
    manifest = RunManifest(
        "solve", cfg.to_dict(), [cfg.seed], [str(args.instance)],
        [p for p in (args.output, args.pos_output) if p],
    )
    if args.timing:
        manifest.wall_time = time.perf_counter() - t0
    doc["manifest"] = manifest.to_dict()
    _write(json.dumps(doc, indent=1) + "\n", args.output)
    if args.pos_output and result.pos is not None:
        Path(args.pos_output).write_text(json.dumps(doc["pos"], indent=1) + "\n")
    if not result.found:
        print("no feasible activity list found", file=sys.stderr)
        return EXIT_NO_FEASIBLE
    return EXIT_OK


def _load_pos_doc(path: str) -> tuple[POS, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: {exc}") from None
    meta: dict = {}
    if isinstance(doc, dict) and "pos" in doc and isinstance(doc["pos"], dict):
        meta = doc
        doc = doc["pos"]
    try:
        return pos_from_dict(doc), meta
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{path}: not a POS document ({exc})") from None


def _check_pos_matches(pos: POS, inst: Instance) -> None:
    if pos.n != inst.n_nodes:
        raise CliError(f"POS has {pos.n} nodes but the instance has {inst.n_nodes} activities")
    for k, units in pos.chains.items():
        if k >= inst.n_resources or len(units) != inst.capacities[k]:
            raise CliError(f"POS chains for resource {k} do not match the instance capacities")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def cmd_evaluate(args) -> int:
    _check_epsilon(args.epsilon)
    if args.lower_bound is not None and args.lower_bound <= 0:
        raise CliError("lower bound must be positive")
    if args.samples < 1:
        raise CliError("samples must be positive")
    inst = apply_sigma(load_instance(args.instance, args.format), args.sigma, args.sigma_mode)
    pos, meta = _load_pos_doc(args.pos)
    _check_pos_matches(pos, inst)
    rule = Rule(args.rule or meta.get("rule") or "gnla")
    if args.robust_makespan is not None:
        fstar = args.robust_makespan
    else:
        fstar = robust_fitness(rule_moments(pos, inst, rule), args.epsilon)
    t0 = time.perf_counter()
    rep = evaluate_pos(pos, inst, args.samples, args.epsilon, fstar, args.seed, args.lower_bound)
    wall = time.perf_counter() - t0
    sigmas = {a.sigma for a in inst.activities[1:-1]}
    sigma = sigmas.pop() if len(sigmas) == 1 else None
    row = [
        inst.name, rule.value, args.epsilon, sigma, rep.samples, rep.robust_makespan, rep.quantile,
        rep.violation_rate, rep.violation_rate_feasible, rep.infeasibility_probability, rep.mnpm,
        rep.mean, rep.variance, wall if args.timing else None,
    ]
    manifest = RunManifest(
        "evaluate",
        {"samples": args.samples, "epsilon": args.epsilon, "rule": rule.value,
         "lower_bound": args.lower_bound, "robust_makespan": fstar},
        [args.seed], [str(args.instance), str(args.pos)],
        [p for p in (args.output, args.dump_makespans) if p],
    )
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_HEADER)
    w.writerow([_fmt(x) for x in row])
    _write(buf.getvalue(), args.output)
    if args.dump_makespans:
        np.savetxt(args.dump_makespans, rep.makespans, fmt="%.10g", header="makespan", comments="")
    return EXIT_OK


def parse_variant(name: str) -> tuple[Rule, bool, bool, bool]:
    """``gnla+og+rc`` -> (rule, ordering, feedback, extra_iterations); a trailing ``+`` asks for extra iterations."""
    parts = name.strip().lower().split("+")
    try:
        rule = Rule(parts[0])
    except ValueError:
        raise CliError(f"unknown variant {name!r}") from None
    og = rc = plus = False
    for p in parts[1:]:
        if p == "og":
            og = True
        elif p == "rc":
            rc = True
        elif p == "":
            plus = True
        else:
            raise CliError(f"unknown variant {name!r}")
    return rule, og, rc, plus


def _run_cell(job: tuple) -> tuple:
    inst, cfg, key = job
    t0 = time.perf_counter()
    res = robust_local_search(inst, cfg)
    return key, res.robust_makespan if res.found else None, res.feasible_fraction, res.found, time.perf_counter() - t0


def _cell_seed(seed: int, *coords: int) -> int:
    return int(np.random.SeedSequence([seed, *coords]).generate_state(1)[0])


def cmd_bench(args) -> int:
    root = Path(args.directory)
    if not root.is_dir():
        raise CliError(f"{root} is not a directory")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".json", ".sch", ".jsp"))
    if not files:
        raise CliError(f"no instances found in {root}")
    for eps in args.epsilons:
        _check_epsilon(eps)
    if any(s < 0 for s in args.sigmas):
        raise CliError("sigma must be nonnegative")
    if args.repeats < 1:
        raise CliError("repeats must be positive")
    variants = [v for v in args.variants.split(",") if v.strip()]
    parsed = [parse_variant(v) for v in variants]
    instances = [load_instance(p, args.format) for p in files]

    jobs = []
    for ii, inst in enumerate(instances):
        n_pairs = len(pairs_selection(inst)) if any(p[3] for p in parsed) else 0
        for vi, (rule, og, rc, plus) in enumerate(parsed):
            for si, sigma in enumerate(args.sigmas):
                sinst = inst.with_sigma(sigma)
                for ei, eps in enumerate(args.epsilons):
                    for rep in range(args.repeats):
                        seed = _cell_seed(args.seed, ii, vi, si, ei, rep)
                        cfg = _search_config(args, rule=rule.value, seed=seed, epsilon=eps, ordering=og, feedback=rc)
                        if plus:
                            cfg = replace(cfg, max_iterations=cfg.max_iterations + n_pairs * cfg.og_samples)
                        jobs.append((sinst, cfg, (ii, vi, si, ei, rep)))

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    buf = io.StringIO()
    manifest = RunManifest(
        "bench",
        {"variants": variants, "sigmas": args.sigmas, "epsilons": args.epsilons, "repeats": args.repeats,
         "iterations": args.iterations, "retries": args.retries, "chaining": args.chaining,
         "og_samples": args.og_samples, "ip": args.ip},
        [args.seed], [str(p) for p in files], [args.output] if args.output else [],
    )
    buf.write("# manifest: " + json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    by_job = {job[2]: job for job in jobs}
    cells: dict[tuple, list] = {}
    for key, fstar, frac, found, wall in results:
        ii, vi, si, ei, rep = key
        cfg = by_job[key][1]
        w.writerow([_fmt(x) for x in (
            "run", instances[ii].name, variants[vi], args.sigmas[si], args.epsilons[ei], rep, cfg.seed,
            cfg.max_iterations, fstar, frac, int(found), wall if args.timing else None,
        )])
        cells.setdefault((ii, vi, si, ei), []).append((fstar, frac, found, wall, cfg.max_iterations))
    for (ii, vi, si, ei), rows in sorted(cells.items()):
        vals = [r[0] for r in rows if r[0] is not None]
        mean_f = float(np.mean(vals)) if vals else None
        w.writerow([_fmt(x) for x in (
            "aggregate", instances[ii].name, variants[vi], args.sigmas[si], args.epsilons[ei], None, None,
            rows[0][4], mean_f, float(np.mean([r[1] for r in rows])), sum(r[2] for r in rows),
            float(np.mean([r[3] for r in rows])) if args.timing else None,
        )])
    _write(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_convert(args) -> int:
    fmt = args.input_format
    inst = load_instance(args.input, fmt)
    inst = apply_sigma(inst, args.sigma, args.sigma_mode)
    doc = instance_to_dict(inst)
    doc["manifest"] = RunManifest(
        "convert", {"from": fmt, "sigma": args.sigma, "sigma_mode": args.sigma_mode}, [],
        [str(args.input)], [args.output] if args.output else [],
    ).to_dict()
    _write(json.dumps(doc, indent=1) + "\n", args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iterations", type=int, default=1000, help="local search iterations (default 1000)")
    p.add_argument("--retries", type=int, default=30, help="random start-time draws per activity")
    p.add_argument("--chaining", choices=("basic", "flexible", "feedback"), default="flexible")
    p.add_argument("--og-samples", type=int, default=100, help="activity lists per pair for ordering generation")
    p.add_argument("--ip", type=float, default=0.6, help="index parameter for ordering decisions")
    p.add_argument("--strict", action="store_true", help="no deterministic sweep or serial fallback")
    p.add_argument("--horizon", type=int, default=None, help="planning horizon (default: safe bound)")
    p.add_argument("--seed", type=int, default=0)


def _sigma_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, default=None, help="constant sigma for every real activity")
    p.add_argument("--sigma-mode", default=None, help="proportional:<f> sets sigma = f * d0")


FORMATS = ("auto", "native", "progen-max", "jsp")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-rcpsp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run the robust local search on one instance")
    p.add_argument("instance")
    p.add_argument("--format", choices=FORMATS, default="auto")
    p.add_argument("--rule", choices=[r.value for r in Rule], default="gnla")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--og", action="store_true", help="run ordering generation first")
    p.add_argument("--rc", action="store_true", help="robustness-feedback chaining")
    _sigma_flags(p)
    _search_flags(p)
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--pos-output", default=None)
    p.add_argument("--timing", action="store_true", help="record wall time (output no longer reproducible)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="Monte Carlo evaluation of a POS")
    p.add_argument("--pos", required=True, help="POS document or solve result")
    p.add_argument("--instance", required=True)
    p.add_argument("--format", choices=FORMATS, default="auto")
    p.add_argument("--rule", choices=[r.value for r in Rule], default=None)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--robust-makespan", type=float, default=None, help="bound to test (default: recomputed)")
    p.add_argument("--lower-bound", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    _sigma_flags(p)
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--dump-makespans", default=None, help="write one realized makespan per line")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="grid of solves over a directory of instances")
    p.add_argument("directory")
    p.add_argument("--format", choices=FORMATS, default="auto")
    p.add_argument("--variants", default="sla,gnla")
    p.add_argument("--sigmas", type=_float_list, default=[0.1, 0.5, 1.0, 2.0])
    p.add_argument("--epsilons", type=_float_list, default=[0.05, 0.1, 0.2, 0.3])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    _search_flags(p)
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_bench, rule="gnla", epsilon=0.1)

    p = sub.add_parser("convert", help="convert ProGen/max or job-shop input to the native format")
    p.add_argument("input")
    p.add_argument("--from", dest="input_format", choices=("progen-max", "jsp", "native"), required=True)
    _sigma_flags(p)
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
