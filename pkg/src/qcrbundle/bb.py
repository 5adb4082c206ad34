"""Branch-and-bound for the reformulated concave MIQP.

Each node maximises the concave objective over the linear system with
integrality dropped and the node's bound overrides applied.  Nodes are
taken best bound first.  Bounds within a relative 1e-6 of the best count
as tied and the deepest such node goes first (then creation order), so a
search with an exact root bound dives instead of sweeping level by level.
The branching variable is the x variable whose fractional part is closest
to 0.5; digit variables t are only branched on once every x is integral.  Incumbent values are
always recomputed exactly from the original objective at integer x.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instances import evaluate_objective
from .qp import solve_qp
from .reform import ReformulatedMiqp

log = logging.getLogger(__name__)

INT_TOL = 1e-6
TIE_TOL = 1e-6
ABS_GAP = 0.99
REL_GAP = 1e-6


class NodeInfeasible(Exception):
    pass


@dataclass
class Relaxation:
    value: float
    point: np.ndarray
    status: str  # optimal | infeasible | max-iter | numerical-failure


@dataclass
class BbReport:
    best_value: float | None
    best_point: tuple[int, ...] | None
    nodes: int
    root_bound: float | None
    root_gap: float | None
    status: str  # optimal | time-limit | infeasible
    final_gap: float | None = None
    bound: float | None = None  # best remaining bound when stopped early
    incumbents: list[float] = field(default_factory=list)
    node_log: list[dict] = field(default_factory=list)


def gap_percent(bound: float, value: float) -> float:
    """100 |bound - value| / |value|; absolute gap when value is zero."""
    if value == 0:
        return abs(bound - value)
    return 100.0 * abs(bound - value) / abs(value)


def solve_continuous_relaxation(miqp: ReformulatedMiqp, lb=None, ub=None, tol: float = 1e-8) -> Relaxation:
    """Maximise the concave objective over the node box ``lb``/``ub``.

    Raises NodeInfeasible when the node has no continuous point.
    """
    lb = miqp.lb if lb is None else np.asarray(lb, dtype=float)
    ub = miqp.ub if ub is None else np.asarray(ub, dtype=float)
    res = solve_qp(-miqp.full_hessian(), -miqp.linear, miqp.A_eq, miqp.b_eq, miqp.G, miqp.h, lb, ub,
                   tol=tol, max_iter=150)
    if res.status == "infeasible":
        raise NodeInfeasible("continuous relaxation is infeasible")
    if res.status != "optimal":
        # one retry with a looser target before reporting the failure
        res2 = solve_qp(-miqp.full_hessian(), -miqp.linear, miqp.A_eq, miqp.b_eq, miqp.G, miqp.h, lb, ub,
                        tol=100 * tol, max_iter=300)
        if res2.status == "infeasible":
            raise NodeInfeasible("continuous relaxation is infeasible")
        if res2.status == "optimal":
            res = res2
    return Relaxation(value=-res.value + miqp.constant, point=res.x, status=res.status)


def _integral_data(miqp: ReformulatedMiqp) -> bool:
    return miqp.inst.has_integral_data()


def _select_branch(point: np.ndarray, miqp: ReformulatedMiqp, lb, ub) -> int | None:
    n = miqp.n
    best, best_score = None, -1.0
    for group in (range(n), range(n, miqp.num_vars)):
        for c in group:
            if not miqp.integer[c]:
                continue
            frac = point[c] - math.floor(point[c])
            dist = min(frac, 1.0 - frac)
            if dist <= INT_TOL:
                continue
            if dist > best_score + 1e-12:
                best, best_score = c, dist
        if best is not None:
            return best
    return None


def _select_node(nodes: list) -> int:
    """Position of the next node: best bound, then deepest, then oldest."""
    top = max(e[0] for e in nodes)
    cut = top - TIE_TOL * max(1.0, abs(top))
    return min((i for i, e in enumerate(nodes) if e[0] >= cut), key=lambda i: (-nodes[i][2], nodes[i][1]))


def _round_and_repair(inst, x: np.ndarray) -> tuple[int, ...] | None:
    """Nearest integer point, else the best one within +-1 on at most two coordinates."""
    u = inst.u
    base = [int(min(max(math.floor(v + 0.5), 0), ub)) for v, ub in zip(x, u)]
    if inst.is_feasible(base):
        return tuple(base)
    n = inst.n
    for width in (1, 2):
        best, best_val = None, None
        for coords in itertools.combinations(range(n), width):
            for deltas in itertools.product((-1, 1), repeat=width):
                cand = list(base)
                for c, d in zip(coords, deltas):
                    cand[c] += d
                if not inst.is_feasible(cand):
                    continue
                val = evaluate_objective(inst, cand)
                if best is None or val > best_val:
                    best, best_val = tuple(cand), val
        if best is not None:
            return best
    return None


def branch_and_bound(
    miqp: ReformulatedMiqp,
    time_limit: float = math.inf,
    node_limit: int | None = None,
    keep_log: bool = False,
) -> BbReport:
    """Solve the reformulated problem (maximisation) to optimality or a limit."""
    inst = miqp.inst  # maximization form
    start = time.perf_counter()
    integral = _integral_data(miqp)
    counter = itertools.count()
    node_log: list[dict] = []
    incumbents: list[float] = []
    best_x: tuple[int, ...] | None = None
    best_val = None  # exact Fraction

    def prunable(bound: float) -> bool:
        if best_val is None:
            return False
        inc = float(best_val)
        if integral:
            return bound <= inc + ABS_GAP
        return bound <= inc + REL_GAP * max(1.0, abs(inc))

    def offer(x) -> None:
        nonlocal best_x, best_val
        x = tuple(int(v) for v in x)
        if not inst.is_feasible(x):
            return
        val = evaluate_objective(inst, x)
        if best_val is None or val > best_val:
            best_x, best_val = x, val
            incumbents.append(float(val))

    def record(nid, depth, bound, var, action):
        if keep_log:
            node_log.append({"node": nid, "depth": depth, "bound": bound, "variable": var, "action": action})

    try:
        root = solve_continuous_relaxation(miqp)
    except NodeInfeasible:
        record(0, 0, math.nan, "", "infeasible")
        return BbReport(None, None, 0, None, None, "infeasible", node_log=node_log)
    if root.status != "optimal":
        log.warning("root relaxation ended with status %s", root.status)
    root_bound = root.value
    cand = _round_and_repair(inst, root.point[: miqp.n])
    if cand is not None:
        offer(cand)

    # open nodes: (bound, id, depth, lb, ub, relaxation)
    open_nodes = [(root_bound, next(counter), 0, miqp.lb.copy(), miqp.ub.copy(), root)]
    nodes = 0
    status = "optimal"
    while open_nodes:
        if (node_limit is not None and nodes >= node_limit) or time.perf_counter() - start > time_limit:
            status = "time-limit"
            break
        bound, nid, depth, lb, ub, rel = open_nodes.pop(_select_node(open_nodes))
        if prunable(bound):
            record(nid, depth, bound, "", "pruned")
            continue
        nodes += 1
        var = _select_branch(rel.point, miqp, lb, ub)
        if var is None and rel.status != "optimal":
            # unreliable relaxation at an integral point: split any open variable
            open_vars = [c for c in np.flatnonzero(miqp.integer) if ub[c] - lb[c] >= 1.0]
            if open_vars:
                var = int(open_vars[0])
        if var is None:
            offer(np.round(rel.point[: miqp.n]))
            record(nid, depth, bound, "", "integral")
            continue
        v = rel.point[var]
        if rel.status != "optimal" and abs(v - round(v)) <= INT_TOL:
            v = 0.5 * (lb[var] + ub[var])
        down = math.floor(v)
        record(nid, depth, bound, miqp.var_names[var], "branch")
        for side in ("down", "up"):
            clb, cub = lb.copy(), ub.copy()
            if side == "down":
                cub[var] = min(cub[var], down)
            else:
                clb[var] = max(clb[var], down + 1)
            if clb[var] > cub[var]:
                continue
            try:
                child = solve_continuous_relaxation(miqp, clb, cub)
            except NodeInfeasible:
                record(-1, depth + 1, math.nan, miqp.var_names[var], f"{side}-infeasible")
                continue
            cbound = child.value
            if child.status != "optimal" or not math.isfinite(cbound):
                # keep the parent bound rather than trusting a failed solve
                cbound = bound
            else:
                cbound = min(cbound, bound)
            if prunable(cbound):
                record(-1, depth + 1, cbound, miqp.var_names[var], f"{side}-pruned")
                continue
            open_nodes.append((cbound, next(counter), depth + 1, clb, cub, child))

    report = BbReport(
        best_value=float(best_val) if best_val is not None else None,
        best_point=best_x,
        nodes=nodes,
        root_bound=root_bound,
        root_gap=None,
        status=status,
        incumbents=incumbents,
        node_log=node_log,
    )
    if best_val is not None:
        report.root_gap = gap_percent(root_bound, float(best_val))
    if status == "time-limit":
        open_bound = max([e[0] for e in open_nodes], default=-math.inf)
        report.bound = open_bound if best_val is None else max(open_bound, float(best_val))
        if best_val is not None:
            report.final_gap = gap_percent(report.bound, float(best_val))
    elif best_val is None:
        report.status = "infeasible"
    return report


def write_node_log(report: BbReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["node", "depth", "bound", "variable", "action"])
        writer.writeheader()
        for row in report.node_log:
            writer.writerow(row)
