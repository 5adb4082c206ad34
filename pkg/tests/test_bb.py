import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcrbundle.bb import (
    NodeInfeasible,
    branch_and_bound,
    gap_percent,
    solve_continuous_relaxation,
    write_node_log,
)
from qcrbundle.bundle import compute_beta
from qcrbundle.instances import brute_force_optimum, complete_kcluster, generate_kcluster, make_instance
from qcrbundle.reform import build_reformulation, ensure_concavity
from qcrbundle.relaxation import build_base_relaxation


def _zero(n):
    return SimpleNamespace(alpha=0.0, lambda_=np.zeros(n), beta={})


def _full(inst, tol=1e-4):
    n = inst.n
    dual = compute_beta(build_base_relaxation(inst), 2 * n * (n - 1), tol=tol)
    return dual, ensure_concavity(build_reformulation(inst, dual, zero_tol=tol))


def test_gap_formula():
    assert gap_percent(11.0, 10.0) == pytest.approx(10.0)
    assert gap_percent(-9.0, -10.0) == pytest.approx(10.0)
    assert gap_percent(0.5, 0.0) == 0.5


def test_linear_relaxation_value():
    inst = make_instance(4, {}, [1, 1, 1, 1], [[1, 1, 1, 1]], [3], [2, 2, 2, 2])
    rel = solve_continuous_relaxation(build_reformulation(inst, _zero(4)))
    assert rel.status == "optimal"
    assert rel.value == pytest.approx(3.0, abs=1e-7)


def test_inconsistent_fixings_are_infeasible():
    inst = make_instance(3, {}, [1, 1, 1], [[1, 1, 1]], [2], [1, 1, 1])
    miqp = build_reformulation(inst, _zero(3))
    ub = miqp.ub.copy()
    ub[:3] = 0.0
    with pytest.raises(NodeInfeasible):
        solve_continuous_relaxation(miqp, miqp.lb, ub)


def test_complete_graph_optimum():
    inst = complete_kcluster(4, 2)
    _, miqp = _full(inst)
    rep = branch_and_bound(miqp)
    assert rep.status == "optimal" and rep.best_value == 1.0 and rep.nodes >= 0
    assert sum(rep.best_point) == 2
    assert rep.root_bound >= 1.0 - 1e-6


def test_root_bound_matches_dual_value():
    inst = generate_kcluster(8, 0.5, 4, seed=3)
    dual, miqp = _full(inst, tol=1e-8)
    assert dual.converged
    root = solve_continuous_relaxation(miqp).value
    assert abs(root - dual.dual_value) <= 1e-3 * max(1.0, abs(dual.dual_value))


def test_twelve_variable_cluster_matches_enumeration():
    inst = generate_kcluster(12, 0.5, 6, seed=7)
    _, miqp = _full(inst)
    rep = branch_and_bound(miqp)
    assert rep.status == "optimal"
    assert rep.best_value == float(brute_force_optimum(inst)[0])


def test_node_limit_zero():
    inst = generate_kcluster(10, 0.5, 5, seed=4)
    miqp = ensure_concavity(build_reformulation(inst, _zero(10)))
    rep = branch_and_bound(miqp, node_limit=0)
    assert rep.status == "time-limit" and rep.nodes == 0
    assert rep.root_bound is not None
    if rep.best_value is None:
        assert rep.final_gap is None
    else:
        assert rep.final_gap == pytest.approx(gap_percent(rep.bound, rep.best_value))


def test_infeasible_problem():
    inst = make_instance(2, {(0, 1): 1}, [0, 0], [[2, 2]], [3], [2, 2])
    rep = branch_and_bound(ensure_concavity(build_reformulation(inst, _zero(2))))
    assert rep.status == "infeasible" and rep.best_value is None


def test_node_log_csv(tmp_path):
    inst = generate_kcluster(8, 0.5, 4, seed=1)
    miqp = ensure_concavity(build_reformulation(inst, _zero(8)))
    rep = branch_and_bound(miqp, keep_log=True)
    assert rep.node_log and rep.node_log[0]["action"] in ("branch", "integral", "pruned")
    write_node_log(rep, tmp_path / "nodes.csv")
    lines = (tmp_path / "nodes.csv").read_text().splitlines()
    assert lines[0] == "node,depth,bound,variable,action"
    assert len(lines) == len(rep.node_log) + 1


@st.composite
def small_problems(draw):
    n = draw(st.integers(2, 4))
    u = draw(st.lists(st.integers(1, 3), min_size=n, max_size=n))
    q = {(i, j): draw(st.integers(-6, 6)) for i in range(n) for j in range(i, n)}
    c = draw(st.lists(st.integers(-6, 6), min_size=n, max_size=n))
    x0 = [draw(st.integers(0, ui)) for ui in u]
    a = [draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))]
    b = [sum(ai * xi for ai, xi in zip(a[0], x0))]
    inst = make_instance(n, q, c, a, b, u, sense=draw(st.sampled_from(["max", "min"])))
    beta = {(i, j): draw(st.floats(-2, 2)) for i in range(n) for j in range(i + 1, n) if draw(st.booleans())}
    lam = draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n))
    dual = SimpleNamespace(alpha=-draw(st.floats(0, 3)), lambda_=np.array(lam), beta=beta)
    return inst, dual


@settings(max_examples=40, deadline=None)
@given(small_problems())
def test_bb_matches_enumeration_for_any_multipliers(data):
    inst, dual = data
    miqp = ensure_concavity(build_reformulation(inst, dual))
    rep = branch_and_bound(miqp)
    best, _ = brute_force_optimum(inst.as_max())
    assert rep.status == "optimal"
    assert rep.best_value == float(best)
    # the root relaxation is an upper bound in maximisation form
    assert rep.root_bound >= float(best) - 1e-6 * (1 + abs(float(best)))
    assert all(b >= a for a, b in zip(rep.incumbents, rep.incumbents[1:]))


@settings(max_examples=10, deadline=None)
@given(small_problems())
def test_bb_is_deterministic(data):
    inst, dual = data
    miqp = ensure_concavity(build_reformulation(inst, dual))
    a = branch_and_bound(miqp, keep_log=True)
    b = branch_and_bound(miqp, keep_log=True)
    assert a.best_point == b.best_point and a.nodes == b.nodes
    strip = lambda log: [{k: v for k, v in row.items() if not (k == "bound" and math.isnan(v))} for row in log]
    assert strip(a.node_log) == strip(b.node_log)
