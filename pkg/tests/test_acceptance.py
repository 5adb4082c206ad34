"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import subprocess
import sys
from types import SimpleNamespace

import numpy as np
import pytest

from qcrbundle.bb import solve_continuous_relaxation
from qcrbundle.bundle import compute_beta, evaluate_dual_function, write_iteration_log
from qcrbundle.conic import Tolerances, check_kkt, solve_conic
from qcrbundle.instances import (
    brute_force_optimum,
    clip_eiqp,
    feasible_points,
    generate_eiqp,
    generate_iep,
    generate_kcluster,
    make_instance,
    save_instance,
)
from qcrbundle.pipeline import MODES, RunConfig, run_pipeline
from qcrbundle.reform import build_reformulation, check_equivalence, ensure_concavity
from qcrbundle.relaxation import build_base_relaxation

from corpus import eiqp_set, kc_set, trend_set

DELTAS = (0.0, 0.1, 0.5, 1.0)


def _mode(inst):
    return MODES["binary" if inst.is_binary() else "integer"]


@pytest.fixture(scope="module")
def phase1_runs():
    """Full-catalog bundle runs on the 50 k-cluster and 20 clipped EIQP instances."""
    runs = []
    for inst in kc_set() + eiqp_set():
        opt, _ = brute_force_optimum(inst.as_max())
        mode = _mode(inst)
        relax = build_base_relaxation(inst)
        dual = compute_beta(relax, len(relax.catalog), tol=mode["tol"])
        runs.append((inst, float(opt), dual))
    return runs


@pytest.fixture(scope="module")
def trend_runs():
    return {inst.name: [run_pipeline(RunConfig(inst, delta=d)) for d in DELTAS] for inst in trend_set()}


def test_criterion_01_exactness(criterion):
    bad = []
    for inst in kc_set():
        opt, _ = brute_force_optimum(inst)
        rep = run_pipeline(RunConfig(inst, delta=1.0))
        if rep.status != "optimal" or rep.optimum != float(opt):
            bad.append((inst.name, rep.status, rep.optimum, float(opt)))
    criterion(1, "exactness on 50 k-cluster instances", not bad, f"{len(bad)} mismatches")
    assert not bad


def test_criterion_02_weak_duality(criterion, phase1_runs):
    worst = min(min(row["value"] - opt for row in dual.history) / (1 + abs(opt)) for _, opt, dual in phase1_runs)
    ok = worst >= -1e-6 and len(phase1_runs) == 70
    criterion(2, "every logged g-value bounds the optimum", ok, f"worst relative slack {worst:.2e}")
    assert ok


def test_criterion_03_bound_consistency(criterion, phase1_runs):
    errs = []
    for inst, _, dual in phase1_runs:
        if not dual.converged or inst.n > 12:
            continue
        miqp = ensure_concavity(build_reformulation(inst, dual, zero_tol=_mode(inst)["zero_tol"]))
        root = solve_continuous_relaxation(miqp).value
        errs.append(abs(root - dual.dual_value) / max(1.0, abs(dual.dual_value)))
    ok = len(errs) >= 20 and max(errs) <= 1e-3
    criterion(3, "root relaxation equals the dual value", ok, f"{len(errs)} runs, worst {max(errs):.2e}")
    assert ok


def test_criterion_04_concavity(criterion):
    rng = np.random.default_rng(2024)
    worst = -np.inf
    for k in range(100):
        fam = k % 4
        n = int(rng.integers(5, 9))
        if fam == 0:
            inst = generate_kcluster(n, float(rng.choice([0.25, 0.5, 0.75])), int(rng.integers(3, n - 1)), k)
        elif fam == 1:
            inst = clip_eiqp(generate_eiqp(1 + k % 2, n, k), int(rng.integers(2, 6)))
        elif fam == 2:
            inst = generate_eiqp(2, n, k)
        else:
            inst = generate_iep(2, 4, 2, k)
        relax = build_base_relaxation(inst)
        chosen = rng.choice(len(relax.catalog), size=min(8, len(relax.catalog)), replace=False)
        beta = {int(e): float(rng.exponential(2.0)) for e in chosen}
        ev = evaluate_dual_function(relax, beta)
        l1, l2, l3 = ev.lambda_components
        pair = {}
        for e, v in beta.items():
            d = relax.catalog[e]
            pair[(d.i, d.j)] = pair.get((d.i, d.j), 0.0) + (v if d.t <= 2 else -v)
        dual = SimpleNamespace(alpha=ev.alpha, lambda_=-l1 - l2 + l3, beta=pair)
        miqp = ensure_concavity(build_reformulation(inst, dual, zero_tol=1e-6))
        H = np.array(miqp.hessian)
        worst = max(worst, float(np.linalg.eigvalsh((H + H.T) / 2)[-1]))
    ok = worst <= 1e-8
    criterion(4, "concave Hessian after the shift", ok, f"largest eigenvalue {worst:.2e}")
    assert ok


def _equivalence_set():
    insts = [generate_kcluster(n, d, 3, 500 + n) for n, d in [(6, 0.5), (7, 0.75), (8, 0.25), (8, 0.6)]]
    insts += [clip_eiqp(generate_eiqp(1 + s % 2, 4 + s % 2, 600 + s), 2 + s % 2) for s in range(10)]
    insts += [generate_iep(2, 2, 2, s) for s in range(2)]
    insts += [make_instance(3, {(0, 0): 2, (0, 1): -3, (1, 2): 4, (2, 2): -1}, [1, -2, 3], [[1, 2, 1]], [4],
                            [3, 2, 4], sense=sense, name=f"mixed_{sense}") for sense in ("max", "min")]
    insts += [make_instance(4, {(i, j): (i + 2 * j) % 5 - 2 for i in range(4) for j in range(i, 4)}, [0, 1, 0, -1],
                            [[1, 1, 1, 1], [1, -1, 0, 2]], [5, 2], [3, 3, 2, 2], name=f"two_rows_{s}")
              for s in range(2)]
    return insts


def test_criterion_05_objective_equivalence(criterion):
    insts = _equivalence_set()
    failures, points = [], 0
    for inst in insts:
        mode = _mode(inst)
        relax = build_base_relaxation(inst)
        dual = compute_beta(relax, len(relax.catalog), tol=mode["tol"])
        miqp = ensure_concavity(build_reformulation(inst, dual, zero_tol=mode["zero_tol"]))
        for x in feasible_points(inst):
            points += 1
            if not (check_equivalence(inst, miqp, x, exact=True) and check_equivalence(inst, miqp, x, exact=False)):
                failures.append((inst.name, x))
    ok = len(insts) == 20 and not failures and points > 0
    criterion(5, "objective equivalence at every feasible point", ok, f"{points} points, {len(failures)} failures")
    assert ok


def test_criterion_06_p_trend(criterion, trend_runs):
    bad = []
    for name, reps in trend_runs.items():
        gaps = [r.gap for r in reps]
        if any(b > a + 1e-4 for a, b in zip(gaps, gaps[1:])):
            bad.append((name, "gap", gaps))
        for r in reps:
            if r.support > r.config["p"]:
                bad.append((name, "support", r.support, r.config["p"]))
    ok = len(trend_runs) == 10 and not bad
    criterion(6, "root gap non-increasing in delta, support within p", ok, f"{len(bad)} violations")
    assert ok


def test_criterion_07_qcr_mode(criterion, tmp_path):
    bad = []
    for inst in kc_set() + eiqp_set():
        dual = compute_beta(build_base_relaxation(inst), 0)
        path = tmp_path / f"{inst.name}.csv"
        write_iteration_log(dual, path)
        rows = path.read_text().splitlines()[1:]
        if dual.oracle_calls != 1 or len(rows) != 1 or dual.beta or dual.beta_components:
            bad.append(inst.name)
    criterion(7, "delta = 0 makes one oracle call with zero beta", not bad, f"{len(bad)} violations")
    assert not bad


def _random_instance(rng, k):
    fam = k % 4
    n = int(rng.integers(5, 16))
    if fam == 0:
        return generate_kcluster(n, float(rng.choice([0.25, 0.5, 0.75])), int(rng.integers(3, n - 1)), k)
    if fam == 1:
        return clip_eiqp(generate_eiqp(1, n, k), int(rng.integers(1, 8)))
    if fam == 2:
        return generate_eiqp(2, min(n, 12), k)
    p = int(rng.integers(2, 4))
    return generate_iep(int(rng.integers(2, 4)), p * int(rng.integers(1, 3)), p, k)


def test_criterion_08_oracle_quality(criterion):
    tol = Tolerances()
    rng = np.random.default_rng(7)
    worst = np.zeros(6)
    bad = []
    for k in range(100):
        inst = _random_instance(rng, k)
        assert inst.n <= 15
        prog = build_base_relaxation(inst).base
        sol = solve_conic(prog, tol)
        rep = check_kkt(prog, sol)
        ratios = np.array([
            rep.primal_residual / tol.feas,
            rep.dual_residual / tol.feas,
            rep.gap / tol.gap,
            rep.complementarity / tol.gap,
            max(0.0, -rep.lambda_min_Z) / tol.psd,
            max(0.0, -rep.min_slack) / tol.nn,
        ])
        worst = np.maximum(worst, ratios)
        if ratios.max() > 10.0:
            bad.append((inst.name, sol.status, ratios.round(2).tolist()))
    ok = not bad
    criterion(8, "KKT residuals within 10x tolerance", ok, f"worst ratio {worst.max():.2f}, {len(bad)} violations")
    assert ok


def test_criterion_09_determinism(criterion, tmp_path):
    inst = generate_kcluster(10, 0.5, 4, seed=9)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    outs = []
    for run in range(2):
        out = tmp_path / f"report{run}.json"
        subprocess.run([sys.executable, "-m", "qcrbundle.cli", "solve", str(path), "--delta", "0.5",
                        "--no-timing", "--out", str(out)], check=True)
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] and b"timing" not in outs[0]
    criterion(9, "identical reports from repeated solves", ok, f"{len(outs[0])} bytes")
    assert ok


def test_criterion_10_node_direction(criterion, trend_runs):
    full = sum(reps[DELTAS.index(1.0)].nodes for reps in trend_runs.values())
    qcr = sum(reps[DELTAS.index(0.0)].nodes for reps in trend_runs.values())
    ok = full <= qcr
    criterion(10, "fewer total nodes with the full catalog", ok, f"{full} nodes at delta=1, {qcr} at delta=0")
    assert ok
