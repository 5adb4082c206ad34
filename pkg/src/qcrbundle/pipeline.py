"""Two-phase driver: bundle dual, reformulation, branch-and-bound, reports.

Reports are plain dataclasses with a JSON form.  Everything except the
``timing`` block is a deterministic function of the configuration, so two
runs with the same config serialise to identical bytes once timing is
dropped.

Report schema (``report_to_dict``):

    instance       name, sense, n, m, u (list)
    config         delta, p, mode, tol, zero_tol, time_limit, node_limit, seed
    dual_value     bound from phase 1, in the instance's own sense
    root_bound     continuous relaxation of the reformulation, same sense
    optimum        best integer value found (null if none)
    point          best integer point (null if none)
    gap            100 |root_bound - optimum| / |optimum|, absolute when optimum = 0
    final_gap      same formula with the best open bound, only after a limit
    nodes          branch-and-bound nodes processed
    bundle_iterations, oracle_calls, support (number of pairs with beta != 0)
    alpha, concavity_shift
    status         optimal | time-limit | infeasible | failed
    error          message when a phase failed, else null
    timing         p1, p2, tt in wall-clock seconds (tt = p1 + p2)
"""

from __future__ import annotations

import json
import logging
import math
import re
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .bb import branch_and_bound, gap_percent, write_node_log
from .bundle import DualSolution, OracleFailure, compute_beta, write_iteration_log
from .conic import Tolerances
from .instances import QpInstance, load_instance
from .reform import ReformulationError, build_reformulation, ensure_concavity, save_miqp
from .relaxation import build_base_relaxation

log = logging.getLogger(__name__)

MODES = {
    "binary": {"tol": 1e-4, "zero_tol": 1e-4},
    "integer": {"tol": 1e-8, "zero_tol": 1e-6},
}
TIMING_KEYS = ("timing",)


class PipelineError(RuntimeError):
    def __init__(self, message: str, report: "RunReport"):
        super().__init__(message)
        self.report = report


def p_from_delta(delta: float, n: int) -> int:
    """Cap on the dualized set; full catalog at delta = 1."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    total = 4 * (n * (n - 1) // 2)
    return min(total, int(math.floor(delta * total + 1e-9)))


@dataclass
class RunConfig:
    instance: QpInstance | str | Path
    delta: float = 1.0
    mode: str | None = None  # binary | integer; None picks from the instance
    tol: float | None = None
    zero_tol: float | None = None
    time_limit: float = math.inf
    node_limit: int | None = None
    seed: int = 0
    out: str | None = None
    log_dir: str | None = None
    max_iter: int = 300

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if self.mode is not None and self.mode not in MODES:
            raise ValueError(f"mode must be one of {sorted(MODES)}, got {self.mode!r}")

    def load(self) -> QpInstance:
        if isinstance(self.instance, QpInstance):
            return self.instance
        return load_instance(self.instance)

    def resolved(self, inst: QpInstance) -> tuple[str, float, float]:
        mode = self.mode or ("binary" if inst.is_binary() else "integer")
        tol = self.tol if self.tol is not None else MODES[mode]["tol"]
        zt = self.zero_tol if self.zero_tol is not None else MODES[mode]["zero_tol"]
        return mode, tol, zt


@dataclass
class RunReport:
    instance: dict
    config: dict
    dual_value: float | None = None
    root_bound: float | None = None
    optimum: float | None = None
    point: list[int] | None = None
    gap: float | None = None
    final_gap: float | None = None
    nodes: int = 0
    bundle_iterations: int = 0
    oracle_calls: int = 0
    support: int = 0
    alpha: float | None = None
    concavity_shift: float = 0.0
    status: str = "failed"
    error: str | None = None
    timing: dict = field(default_factory=lambda: {"p1": 0.0, "p2": 0.0, "tt": 0.0})

    @property
    def name(self) -> str:
        return self.instance["name"]


def report_to_dict(report: RunReport, timing: bool = True) -> dict:
    d = asdict(report)
    if not timing:
        for k in TIMING_KEYS:
            d.pop(k, None)
    return d


def report_from_dict(d: dict) -> RunReport:
    return RunReport(**d)


def dumps_report(report: RunReport, timing: bool = True) -> str:
    return json.dumps(report_to_dict(report, timing), indent=1, sort_keys=True) + "\n"


def dual_to_dict(sol: DualSolution) -> dict:
    return {
        "alpha": sol.alpha,
        "lambda": [float(v) for v in sol.lambda_],
        "beta": [[i + 1, j + 1, v] for (i, j), v in sorted(sol.beta.items())],
        "beta_components": [[i + 1, j + 1, t, v] for (i, j, t), v in sorted(sol.beta_components.items())],
        "dual_value": sol.dual_value,
        "oracle_calls": sol.oracle_calls,
        "converged": sol.converged,
        "p": sol.p,
        "support": sol.support,
    }


def _sense(inst: QpInstance, v: float | None) -> float | None:
    # internal values are in maximization form
    if v is None:
        return None
    return v if inst.sense == "max" else -v


def run_phase1(config: RunConfig) -> tuple[QpInstance, DualSolution]:
    inst = config.load()
    _, tol, _ = config.resolved(inst)
    relax = build_base_relaxation(inst)
    p = p_from_delta(config.delta, inst.n)
    return inst, compute_beta(relax, p, tol=tol, max_iter=config.max_iter, conic_tol=Tolerances())


def run_pipeline(config: RunConfig) -> RunReport:
    inst = config.load()
    mode, tol, zt = config.resolved(inst)
    p = p_from_delta(config.delta, inst.n)
    report = RunReport(
        instance={"name": inst.name, "sense": inst.sense, "n": inst.n, "m": inst.m, "u": list(inst.u)},
        config={
            "delta": config.delta,
            "p": p,
            "mode": mode,
            "tol": tol,
            "zero_tol": zt,
            "time_limit": None if math.isinf(config.time_limit) else config.time_limit,
            "node_limit": config.node_limit,
            "seed": config.seed,
        },
    )
    logdir = Path(config.log_dir) if config.log_dir else None
    if logdir:
        logdir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    try:
        relax = build_base_relaxation(inst)
        dual = compute_beta(relax, p, tol=tol, max_iter=config.max_iter)
    except (OracleFailure, OverflowError) as exc:
        report.timing["p1"] = report.timing["tt"] = time.perf_counter() - t0
        report.error = f"phase 1: {exc}"
        raise PipelineError(report.error, report) from exc
    p1 = time.perf_counter() - t0
    report.dual_value = _sense(inst, dual.dual_value)
    report.bundle_iterations = max((row["iteration"] for row in dual.history), default=0)
    report.oracle_calls = dual.oracle_calls
    report.support = dual.support
    if logdir:
        write_iteration_log(dual, logdir / f"{inst.name}_bundle.csv")

    t1 = time.perf_counter()
    try:
        miqp = ensure_concavity(build_reformulation(inst, dual, zero_tol=zt))
        report.alpha = miqp.alpha
        report.concavity_shift = miqp.concavity_shift
        if logdir:
            save_miqp(miqp, logdir / f"{inst.name}_miqp.json")
        bb = branch_and_bound(miqp, time_limit=config.time_limit, node_limit=config.node_limit,
                              keep_log=logdir is not None)
    except ReformulationError as exc:
        report.timing.update(p1=p1, p2=time.perf_counter() - t1)
        report.timing["tt"] = report.timing["p1"] + report.timing["p2"]
        report.error = f"phase 2: {exc}"
        raise PipelineError(report.error, report) from exc
    p2 = time.perf_counter() - t1
    report.timing = {"p1": p1, "p2": p2, "tt": p1 + p2}
    if logdir:
        write_node_log(bb, logdir / f"{inst.name}_nodes.csv")

    report.status = bb.status
    report.nodes = bb.nodes
    report.root_bound = _sense(inst, bb.root_bound)
    report.optimum = _sense(inst, bb.best_value)
    report.point = list(bb.best_point) if bb.best_point is not None else None
    if bb.best_value is not None and bb.root_bound is not None:
        report.gap = gap_percent(bb.root_bound, bb.best_value)
    report.final_gap = bb.final_gap
    if config.out:
        Path(config.out).write_text(dumps_report(report))
    return report


# ---------------------------------------------------------------- batches


@dataclass
class BatchRow:
    group: str
    count: int
    solved: int
    gap: float | None
    p1: float | None
    p2: float | None
    tt: float | None
    nodes: float | None
    tt_min: float | None
    tt_max: float | None

    @property
    def annotation(self) -> str:
        return "" if self.solved == self.count else f"({self.solved})"


def group_name(name: str) -> str:
    """Instance name without its trailing seed tag."""
    return re.sub(r"_s\d+(?=_|$)", "", name)


def summarize(reports: list[RunReport], group_by: str = "all") -> list[BatchRow]:
    """Per-group means of Gap/P1/P2/Tt/Nodes and the Tt range over solved runs.

    Runs that did not finish with status optimal are counted but left out of
    every mean; the row annotation then gives the number solved.
    """
    groups: dict[str, list[RunReport]] = {}
    for r in reports:
        key = "all" if group_by == "all" else group_name(r.name)
        groups.setdefault(key, []).append(r)
    rows = []
    for key, runs in groups.items():
        ok = [r for r in runs if r.status == "optimal"]

        def mean(vals):
            vals = [v for v in vals if v is not None]
            return statistics.fmean(vals) if vals else None

        tts = [r.timing["tt"] for r in ok]
        rows.append(BatchRow(
            group=key,
            count=len(runs),
            solved=len(ok),
            gap=mean([r.gap for r in ok]),
            p1=mean([r.timing["p1"] for r in ok]),
            p2=mean([r.timing["p2"] for r in ok]),
            tt=mean(tts),
            nodes=mean([r.nodes for r in ok]),
            tt_min=min(tts) if tts else None,
            tt_max=max(tts) if tts else None,
        ))
    return rows


def run_batch(configs: list[RunConfig], group_by: str = "all") -> tuple[list[RunReport], list[BatchRow]]:
    reports = []
    for cfg in configs:
        try:
            reports.append(run_pipeline(cfg))
        except PipelineError as exc:
            log.warning("run failed: %s", exc)
            reports.append(exc.report)
    return reports, summarize(reports, group_by)


def format_table(rows: list[BatchRow]) -> str:
    def f(v, fmt):
        return "-" if v is None else format(v, fmt)

    lines = [f"{'group':<28} {'Gap':>8} {'P1':>8} {'P2':>8} {'Tt':>8} {'Min':>8} {'Max':>8} {'Nodes':>8}"]
    for r in rows:
        label = f"{r.group} {r.annotation}".strip()
        lines.append(f"{label:<28} {f(r.gap, '8.3f')} {f(r.p1, '8.2f')} {f(r.p2, '8.2f')} {f(r.tt, '8.2f')} "
                     f"{f(r.tt_min, '8.2f')} {f(r.tt_max, '8.2f')} {f(r.nodes, '8.1f')}")
    return "\n".join(lines)
