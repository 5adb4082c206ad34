"""Dynamic proximal bundle method for the partial Lagrangian dual.

The dual function is

    g(beta) = max { f(X, x) - sum_e beta_e h_e(X, x) : (X, x) in the base set }

over catalog entries e = (i, j, t).  It is convex; one oracle call returns
g(beta) together with a maximiser (X, x), and -h(X, x) is a subgradient.
Only entries in the active set carry multipliers; the set grows toward
violated entries and sheds entries whose multiplier is (near) zero, never
exceeding the cap p.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .conic import ConicError, Tolerances, near_optimal, solve_conic
from .qp import solve_qp
from .relaxation import SdpRelaxation

log = logging.getLogger(__name__)

DROP_THRESHOLD = 1e-8
SNAP_TOL = 1e-6
DESCENT_FRACTION = 0.1
BUNDLE_CAP = 50
MIN_WEIGHT = 1e-6


class OracleFailure(RuntimeError):
    def __init__(self, message: str, history: list | None = None):
        super().__init__(message)
        self.history = history or []


@dataclass
class OracleResult:
    value: float
    X: np.ndarray
    x: np.ndarray
    alpha: float
    lambda_components: tuple[np.ndarray, np.ndarray, np.ndarray]
    violations: np.ndarray  # h over the whole catalog at (X, x)
    status: str


@dataclass
class Minorant:
    """Affine lower bound g(beta) >= const + slope . beta, exact at ``anchor``."""

    anchor: dict[int, float]
    value: float
    const: float
    slope: np.ndarray  # over the whole catalog

    def at(self, idx, beta) -> float:
        return float(self.const + self.slope[idx] @ beta)


@dataclass
class BundleState:
    center: dict[int, float]
    center_value: float
    bundle: list[Minorant]
    active: list[int]
    weight: float = 1.0
    iteration: int = 0
    center_eval: OracleResult | None = None


@dataclass
class DualSolution:
    alpha: float
    lambda_: np.ndarray
    beta: dict[tuple[int, int], float]
    beta_components: dict[tuple[int, int, int], float]
    dual_value: float
    history: list[dict] = field(default_factory=list)
    oracle_calls: int = 0
    converged: bool = True
    p: int = 0

    @property
    def support(self) -> int:
        return sum(1 for v in self.beta_components.values() if v != 0.0)


def _catalog_beta(relax: SdpRelaxation, beta) -> dict[int, float]:
    """Accept either catalog positions or (i, j, t) keys."""
    out: dict[int, float] = {}
    for key, val in dict(beta).items():
        e = relax.catalog_index(*key) if isinstance(key, tuple) else int(key)
        if not 0 <= e < len(relax.catalog):
            raise ValueError(f"catalog entry {key} out of range")
        if val < 0:
            raise ValueError(f"multiplier for {key} is negative ({val})")
        out[e] = float(val)
    return out


def evaluate_dual_function(
    relax: SdpRelaxation, beta: Mapping, tol: Tolerances = Tolerances()
) -> OracleResult:
    """One oracle call: g(beta), the maximiser and the inner multipliers."""
    b = _catalog_beta(relax, beta)
    idx = np.array(sorted(b), dtype=int)
    vals = np.array([b[e] for e in idx], dtype=float)
    prog = relax.dualized(idx, vals)
    sol = solve_conic(prog, tol)
    if sol.status != "optimal" and near_optimal(sol, tol):
        log.info("oracle stalled within 10x tolerance (%s); iterate accepted", sol.status)
    elif sol.status == "numerical-failure":
        raise OracleFailure("conic oracle reported a numerical failure")
    elif sol.status != "optimal":
        log.warning("oracle ended with status %s; value used as an approximate bound", sol.status)
    X, x = sol.X, sol.x
    im = relax.index_map
    alpha = -float(sol.dual[im["square"]]) if im["square"] is not None else 0.0
    lam = tuple(np.array([sol.dual[r] for r in im[key]]) for key in ("lam1", "lam2", "lam3"))
    return OracleResult(
        value=float(sol.obj_primal),
        X=np.array(X),
        x=np.array(x),
        alpha=alpha,
        lambda_components=lam,
        violations=relax.violations(X, x),
        status=sol.status,
    )


def minorant_from(beta: dict[int, float], ev: OracleResult) -> Minorant:
    slope = -np.asarray(ev.violations, dtype=float)
    anchor_dot = sum(slope[e] * v for e, v in beta.items())
    return Minorant(anchor=dict(beta), value=ev.value, const=ev.value - anchor_dot, slope=slope)


def master_step(state: BundleState, tol: float = 1e-8) -> tuple[dict[int, float], float, np.ndarray]:
    """Proximal cutting-plane step over the active set.

    Solves  min_{beta >= 0} max_i m_i(beta) + (tau/2)|beta - center|^2  and
    returns the candidate, the predicted decrease
    g(center) - (model(candidate) + (tau/2)|candidate - center|^2),
    and the convexity weights of the minorants.
    """
    if not state.bundle:
        raise ValueError("bundle is empty")
    idx = np.array(state.active, dtype=int)
    nb = len(state.bundle)
    if idx.size == 0:
        return dict(state.center), 0.0, np.full(nb, 1.0 / nb)
    k = idx.size
    tau = state.weight
    c = np.array([state.center.get(e, 0.0) for e in idx])
    slopes = np.array([m.slope[idx] for m in state.bundle])
    consts = np.array([m.const for m in state.bundle])
    if np.allclose(slopes, 0.0) and np.ptp(consts) == 0.0:
        return dict(state.center), 0.0, np.full(nb, 1.0 / nb)
    # variables (beta, r): min r + tau/2 |beta - c|^2, const_i + slope_i beta - r <= 0
    H = np.zeros((k + 1, k + 1))
    H[:k, :k] = tau * np.eye(k)
    g = np.concatenate([-tau * c, [1.0]])
    G = np.hstack([slopes, -np.ones((nb, 1))])
    h = -consts
    lb = np.concatenate([np.zeros(k), [-np.inf]])
    res = solve_qp(H, g, G=G, h=h, lb=lb, tol=min(tol, 1e-9), max_iter=200, check_feasibility=False)
    if res.status not in ("optimal", "max-iter"):
        raise ConicError(f"bundle master problem failed ({res.status})")
    cand = np.maximum(res.x[:k], 0.0)
    theta = np.maximum(res.ineq_dual, 0.0)
    # the interior-point iterate stays slightly off the bound beta = 0; snap
    # near-zero entries whose reduced gradient says the bound is active
    grad = tau * (cand - c) + theta @ slopes
    cand[(cand < DROP_THRESHOLD) | ((cand < SNAP_TOL * (1.0 + np.abs(c))) & (grad > 0))] = 0.0
    model = float(np.max(consts + slopes @ cand))
    prox = 0.5 * tau * float(np.sum((cand - c) ** 2))
    pd = max(0.0, state.center_value - (model + prox))
    if theta.sum() > 0:
        theta = theta / theta.sum()
    return {int(e): float(v) for e, v in zip(idx, cand) if v != 0.0}, pd, theta


def update_active_set(state: BundleState, violations: np.ndarray, p: int) -> list[int]:
    """Drop idle entries, then fill up to p with the most violated ones.

    A member leaves when its center multiplier is below the drop threshold
    and it is not violated.  Entrants are taken by decreasing violation with
    ties broken by catalog (lexicographic) order.
    """
    if p <= 0:
        return []
    keep = [e for e in state.active if state.center.get(e, 0.0) >= DROP_THRESHOLD or violations[e] > 0]
    keep = keep[:p]
    room = p - len(keep)
    if room > 0:
        members = set(keep)
        cand = np.flatnonzero(violations > 0)
        cand = [int(e) for e in cand if int(e) not in members]
        cand.sort(key=lambda e: (-violations[e], e))
        keep.extend(cand[:room])
    return sorted(keep)


def _aggregate(bundle: list[Minorant], theta: np.ndarray) -> Minorant:
    slope = sum(t * m.slope for t, m in zip(theta, bundle))
    const = float(sum(t * m.const for t, m in zip(theta, bundle)))
    value = float(sum(t * m.value for t, m in zip(theta, bundle)))
    return Minorant(anchor={}, value=value, const=const, slope=np.asarray(slope, dtype=float))


def _compress(bundle: list[Minorant], theta: np.ndarray, cap: int) -> list[Minorant]:
    """Evict the least-weighted minorants, keeping an aggregate of the model."""
    if len(bundle) <= cap:
        return bundle
    w = np.zeros(len(bundle))
    w[: theta.size] = theta[: len(bundle)]
    agg = _aggregate(bundle[: theta.size], theta) if theta.size and theta.sum() > 0 else None
    w[-1] = math.inf  # the newest minorant always stays
    order = sorted(range(len(bundle)), key=lambda i: (w[i], i))
    n_drop = len(bundle) - cap + (1 if agg is not None else 0)
    drop = set(order[:n_drop])
    kept = [m for i, m in enumerate(bundle) if i not in drop]
    if agg is not None:
        kept.append(agg)
    return kept


def compute_beta(
    relax: SdpRelaxation,
    p: int,
    tol: float = 1e-8,
    max_iter: int = 300,
    conic_tol: Tolerances = Tolerances(),
) -> DualSolution:
    """Minimise g over beta >= 0 with at most p dualized catalog entries."""
    total = len(relax.catalog)
    if not 0 <= p <= total:
        raise ValueError(f"p must lie in [0, {total}], got {p}")
    history: list[dict] = []
    calls = 0

    def oracle(beta):
        nonlocal calls
        calls += 1
        try:
            return evaluate_dual_function(relax, beta, conic_tol)
        except (OracleFailure, ConicError) as exc:
            raise OracleFailure(str(exc), history) from exc

    ev = oracle({})
    state = BundleState(center={}, center_value=ev.value, bundle=[], active=[], center_eval=ev)
    history.append(_log_row(0, ev.value, ev.value, 0, "initial", math.nan, ev.status, state.weight))
    converged = True
    if p > 0:
        state.active = update_active_set(state, ev.violations, p)
        state.bundle = [minorant_from({}, ev)]
        converged = False
        while state.iteration < max_iter:
            if not state.active:
                converged = True
                break
            cand, pd, theta = master_step(state, tol)
            if pd <= tol * (1.0 + abs(state.center_value)):
                converged = True
                break
            state.iteration += 1
            ev = oracle(cand)
            state.bundle.append(minorant_from(cand, ev))
            if state.center_value - ev.value >= DESCENT_FRACTION * pd:
                step = "descent"
                state.center, state.center_value, state.center_eval = cand, ev.value, ev
                state.weight = max(state.weight / 2.0, MIN_WEIGHT)
            else:
                step = "null"
                state.weight *= 2.0
            state.bundle = _compress(state.bundle, theta, BUNDLE_CAP)
            state.active = update_active_set(state, ev.violations, p)
            # entries that left the active set keep a zero multiplier
            dropped = [e for e in state.center if e not in set(state.active)]
            if dropped:
                if any(state.center[e] != 0.0 for e in dropped):
                    state.center = {e: v for e, v in state.center.items() if e not in dropped}
                    ce = oracle(state.center)
                    state.center_value, state.center_eval = ce.value, ce
                    state.bundle.append(minorant_from(state.center, ce))
                    history.append(_log_row(state.iteration, ce.value, ce.value, len(state.active), "reeval",
                                            math.nan, ce.status, state.weight))
                else:
                    state.center = {e: v for e, v in state.center.items() if e not in dropped}
            history.append(_log_row(state.iteration, ev.value, state.center_value, len(state.active), step, pd,
                                    ev.status, state.weight))
        if not converged:
            log.warning("bundle method stopped at the iteration limit (%d)", max_iter)
    ce = state.center_eval
    comps: dict[tuple[int, int, int], float] = {}
    beta: dict[tuple[int, int], float] = {}
    signs = {1: 1.0, 2: 1.0, 3: -1.0, 4: -1.0}
    for e, v in sorted(state.center.items()):
        if v == 0.0:
            continue
        d = relax.catalog[e]
        comps[(d.i, d.j, d.t)] = v
        beta[(d.i, d.j)] = beta.get((d.i, d.j), 0.0) + signs[d.t] * v
    l1, l2, l3 = ce.lambda_components
    return DualSolution(
        alpha=ce.alpha,
        lambda_=-l1 - l2 + l3,
        beta=beta,
        beta_components=comps,
        dual_value=state.center_value,
        history=history,
        oracle_calls=calls,
        converged=converged,
        p=p,
    )


def _log_row(it, value, center, active, step, pd, status, weight) -> dict:
    return {"iteration": it, "value": value, "center_value": center, "active": active, "step": step,
            "predicted_decrease": pd, "status": status, "weight": weight}


def write_iteration_log(sol: DualSolution, path: str | Path) -> None:
    fields = ["iteration", "value", "center_value", "active", "step", "predicted_decrease", "status", "weight"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in sol.history:
            writer.writerow(row)
