"""Command-line entry point: gen, solve, phase1, bruteforce, batch."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import instances as ins
from .bundle import write_iteration_log
from .pipeline import (
    MODES,
    PipelineError,
    RunConfig,
    dual_to_dict,
    dumps_report,
    format_table,
    run_batch,
    run_phase1,
    run_pipeline,
)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=1.0, help="fraction of the catalog that may be dualized")
    p.add_argument("--mode", choices=sorted(MODES), default=None, help="tolerance preset (default: from instance)")
    p.add_argument("--tol", type=float, default=None, help="phase-1 stopping tolerance")
    p.add_argument("--zero-tol", type=float, default=None, help="multipliers below this are treated as zero")
    p.add_argument("--time-limit", type=float, default=math.inf, metavar="SECONDS")
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=300, help="bundle iteration limit")
    p.add_argument("--out", default=None, metavar="FILE")
    p.add_argument("--log-dir", default=None)


def _config(args, instance) -> RunConfig:
    return RunConfig(
        instance=instance,
        delta=args.delta,
        mode=args.mode,
        tol=args.tol,
        zero_tol=args.zero_tol,
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        seed=args.seed,
        log_dir=args.log_dir,
        max_iter=args.max_iter,
    )


def cmd_gen(args) -> int:
    if args.family == "kcluster":
        k = args.k if args.k is not None else args.n // 2
        inst = ins.generate_kcluster(args.n, args.density, k, args.seed)
    elif args.family in ("eiqp1", "eiqp2"):
        inst = ins.generate_eiqp(int(args.family[-1]), args.n, args.seed)
        if args.cap is not None:
            inst = ins.clip_eiqp(inst, args.cap)
    else:
        inst = ins.generate_iep(args.n, args.m, args.p, args.seed)
    _emit(ins.dumps_instance(inst), args.out)
    return 0


def cmd_solve(args) -> int:
    cfg = _config(args, args.instance)
    try:
        report = run_pipeline(cfg)
    except PipelineError as exc:
        _emit(dumps_report(exc.report, timing=not args.no_timing), args.out)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(dumps_report(report, timing=not args.no_timing), args.out)
    return 0


def cmd_phase1(args) -> int:
    cfg = _config(args, args.instance)
    inst, dual = run_phase1(cfg)
    d = dual_to_dict(dual)
    d["name"] = inst.name
    # the bundle works on the maximization form
    d["bound"] = dual.dual_value if inst.sense == "max" else -dual.dual_value
    _emit(json.dumps(d, indent=1) + "\n", args.out)
    if args.log_dir:
        Path(args.log_dir).mkdir(parents=True, exist_ok=True)
        write_iteration_log(dual, Path(args.log_dir) / f"{inst.name}_bundle.csv")
    return 0


def cmd_bruteforce(args) -> int:
    inst = ins.load_instance(args.instance)
    try:
        val, x = ins.brute_force_optimum(inst, limit=args.limit)
    except ins.InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = {"name": inst.name, "sense": inst.sense, "optimum": str(val), "point": list(x)}
    _emit(json.dumps(out, indent=1) + "\n", args.out)
    return 0


def cmd_batch(args) -> int:
    configs = [_config(args, path) for path in args.instances]
    reports, rows = run_batch(configs, group_by=args.group_by)
    table = format_table(rows)
    if args.out:
        data = {"rows": [r.__dict__ | {"annotation": r.annotation} for r in rows],
                "runs": [json.loads(dumps_report(r, timing=not args.no_timing)) for r in reports]}
        Path(args.out).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    print(table)
    return 0 if all(r.status == "optimal" for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcrbundle", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--family", choices=["kcluster", "eiqp1", "eiqp2", "iep"], required=True)
    g.add_argument("--n", type=int, required=True, help="variables (item types for iep)")
    g.add_argument("--density", type=float, default=0.5, help="kcluster edge probability")
    g.add_argument("--k", type=int, default=None, help="kcluster cluster size (default n/2)")
    g.add_argument("--cap", type=int, default=None, help="eiqp: clip the box to [0, cap]")
    g.add_argument("--m", type=int, default=2, help="iep: items per type")
    g.add_argument("--p", type=int, default=2, help="iep: number of sets")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None, metavar="FILE")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run both phases on an instance file")
    s.add_argument("instance")
    _add_run_flags(s)
    s.add_argument("--no-timing", action="store_true", help="omit wall-clock fields from the report")
    s.set_defaults(func=cmd_solve)

    p1 = sub.add_parser("phase1", help="compute the dual multipliers only")
    p1.add_argument("instance")
    _add_run_flags(p1)
    p1.set_defaults(func=cmd_phase1)

    bf = sub.add_parser("bruteforce", help="enumerate the integer box")
    bf.add_argument("instance")
    bf.add_argument("--limit", type=int, default=10**6)
    bf.add_argument("--out", default=None, metavar="FILE")
    bf.set_defaults(func=cmd_bruteforce)

    b = sub.add_parser("batch", help="solve several instance files and print a summary table")
    b.add_argument("instances", nargs="+")
    _add_run_flags(b)
    b.add_argument("--group-by", choices=["all", "name"], default="name")
    b.add_argument("--no-timing", action="store_true")
    b.set_defaults(func=cmd_batch)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
