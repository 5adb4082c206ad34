import json
import math
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcrbundle.instances import complete_kcluster, generate_kcluster, make_instance, save_instance
from qcrbundle.pipeline import (
    RunConfig,
    RunReport,
    dumps_report,
    format_table,
    group_name,
    p_from_delta,
    report_from_dict,
    report_to_dict,
    run_batch,
    run_pipeline,
    summarize,
)


def test_p_from_delta():
    assert p_from_delta(0.0, 10) == 0
    assert p_from_delta(1.0, 10) == 180
    assert p_from_delta(0.1, 10) == 18
    assert p_from_delta(0.5, 3) == 6
    with pytest.raises(ValueError):
        p_from_delta(1.5, 4)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(instance="x.json", delta=-0.1)
    with pytest.raises(ValueError):
        RunConfig(instance="x.json", mode="ternary")
    inst = complete_kcluster(4, 2)
    assert RunConfig(inst).resolved(inst) == ("binary", 1e-4, 1e-4)
    assert RunConfig(inst, mode="integer").resolved(inst) == ("integer", 1e-8, 1e-6)


def test_delta_zero_is_single_oracle_call():
    rep = run_pipeline(RunConfig(generate_kcluster(8, 0.5, 4, seed=2), delta=0.0))
    assert rep.oracle_calls == 1 and rep.support == 0 and rep.bundle_iterations == 0
    assert rep.status == "optimal"


def test_complete_graph_full_delta(tmp_path):
    out = tmp_path / "rep.json"
    rep = run_pipeline(RunConfig(complete_kcluster(4, 2), delta=1.0, out=str(out), log_dir=str(tmp_path / "logs")))
    assert rep.optimum == 1.0 and rep.gap >= 0.0 and rep.status == "optimal"
    assert json.loads(out.read_text())["optimum"] == 1.0
    names = sorted(p.name for p in (tmp_path / "logs").iterdir())
    assert names == [f"{rep.name}_bundle.csv", f"{rep.name}_miqp.json", f"{rep.name}_nodes.csv"]


def test_gap_trend_on_twelve_nodes():
    inst = generate_kcluster(12, 0.5, 6, seed=7)
    g0 = run_pipeline(RunConfig(inst, delta=0.0)).gap
    g1 = run_pipeline(RunConfig(inst, delta=1.0)).gap
    assert g1 <= g0 + 1e-4


def test_minimisation_reported_in_own_sense():
    inst = make_instance(3, {(0, 1): 2, (1, 2): -3}, [1, -1, 0], [[1, 1, 1]], [3], [2, 2, 2], sense="min")
    rep = run_pipeline(RunConfig(inst))
    assert rep.status == "optimal"
    # in minimisation form the relaxation gives a lower bound
    assert rep.root_bound <= rep.optimum + 1e-6
    assert rep.dual_value <= rep.optimum + 1e-6


def test_report_roundtrip():
    rep = run_pipeline(RunConfig(complete_kcluster(5, 3)))
    back = report_from_dict(json.loads(dumps_report(rep)))
    assert back == rep
    assert "timing" not in report_to_dict(rep, timing=False)
    assert dumps_report(rep, timing=False) == dumps_report(back, timing=False)


def _fake(name, status="optimal", gap=1.0, tt=1.0, nodes=3):
    return RunReport(instance={"name": name}, config={}, gap=gap, nodes=nodes, status=status,
                     timing={"p1": tt / 2, "p2": tt / 2, "tt": tt})


def test_summary_single_run():
    (row,) = summarize([_fake("a", gap=2.5, tt=4.0, nodes=7)])
    assert (row.gap, row.tt, row.p1, row.nodes, row.tt_min, row.tt_max) == (2.5, 4.0, 2.0, 7, 4.0, 4.0)
    assert row.annotation == ""


def test_summary_excludes_unsolved_runs():
    reports = [_fake(f"r{i}", gap=float(i), tt=float(i + 1)) for i in range(4)]
    reports.append(_fake("late", status="time-limit", gap=50.0, tt=100.0))
    (row,) = summarize(reports)
    assert row.count == 5 and row.solved == 4 and row.annotation == "(4)"
    assert row.tt == statistics.fmean([1, 2, 3, 4]) and row.tt_max == 4.0
    assert "(4)" in format_table([row])


def test_group_names():
    assert group_name("kc_n10_d0.5_k5_s3") == "kc_n10_d0.5_k5"
    assert group_name("eiqp1_n6_s205_cap3") == "eiqp1_n6_cap3"
    rows = summarize([_fake("a_s1"), _fake("a_s2"), _fake("b_s1")], group_by="name")
    assert [(r.group, r.count) for r in rows] == [("a", 2), ("b", 1)]


def test_batch_mean_gap_recomputed(tmp_path):
    paths = []
    for s in range(5):
        path = tmp_path / f"kc{s}.json"
        save_instance(generate_kcluster(10, 0.5, 4, seed=300 + s), path)
        paths.append(str(path))
    reports, rows = run_batch([RunConfig(p, delta=0.1) for p in paths])
    assert len(rows) == 1 and rows[0].count == 5
    solved = [r for r in reports if r.status == "optimal"]
    assert rows[0].gap == pytest.approx(sum(r.gap for r in solved) / len(solved), rel=1e-12)


def test_batch_with_node_limit_annotation():
    insts = [generate_kcluster(10, 0.5, 5, seed=400 + s) for s in range(5)]
    configs = [RunConfig(inst, delta=0.0) for inst in insts]
    configs[2] = RunConfig(insts[2], delta=0.0, node_limit=0)
    reports, (row,) = run_batch(configs)
    assert reports[2].status == "time-limit"
    assert row.solved == 4 and row.annotation == "(4)"
    assert row.tt == pytest.approx(statistics.fmean([r.timing["tt"] for i, r in enumerate(reports) if i != 2]))


@settings(max_examples=5, deadline=None)
@given(st.integers(2, 5), st.integers(0, 50))
def test_gap_invariant_under_objective_scaling(scale, seed):
    base = generate_kcluster(7, 0.6, 3, seed=seed)
    scaled = make_instance(base.n, {ij: scale * v for ij, v in base.q}, base.c, base.a, base.b, base.u)
    r1 = run_pipeline(RunConfig(base, delta=0.0, mode="integer"))
    r2 = run_pipeline(RunConfig(scaled, delta=0.0, mode="integer"))
    assert r2.optimum == scale * r1.optimum
    assert math.isclose(r1.gap, r2.gap, rel_tol=1e-4, abs_tol=1e-4)
