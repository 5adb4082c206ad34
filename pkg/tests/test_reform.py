import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcrbundle.bundle import compute_beta
from qcrbundle.instances import (
    clip_eiqp,
    complete_kcluster,
    feasible_points,
    generate_eiqp,
    make_instance,
)
from qcrbundle.reform import (
    EquivalenceError,
    ReformulationError,
    build_reformulation,
    check_equivalence,
    digits,
    ensure_concavity,
    induced_point,
    moderate_alpha,
    num_bits,
    save_miqp,
)
from qcrbundle.relaxation import build_base_relaxation


def _dual(n, alpha=0.0, lam=None, beta=None):
    return SimpleNamespace(alpha=alpha, lambda_=np.zeros(n) if lam is None else np.asarray(lam, float),
                           beta=beta or {})


def test_zero_multipliers_give_original_problem():
    inst = clip_eiqp(generate_eiqp(1, 4, 0), 3)
    miqp = build_reformulation(inst, _dual(4))
    assert miqp.num_vars == 4
    assert not (miqp.t_index or miqp.z_index or miqp.y_index)
    assert np.allclose(miqp.hessian, 2 * inst.as_max().q_matrix())
    assert miqp.eq_families == ("original",)


@pytest.mark.parametrize("u, bits", [(1, 1), (2, 2), (3, 2), (5, 3), (8, 4), (30, 5)])
def test_num_bits(u, bits):
    assert num_bits(u) == bits
    for v in range(u + 1):
        assert sum(d << k for k, d in enumerate(digits(v, bits))) == v


def test_num_bits_rejects_zero():
    with pytest.raises(ReformulationError):
        num_bits(0)


def test_digit_row_for_bound_five():
    inst = make_instance(2, {(0, 1): 1}, [0, 0], [], [], [5, 5])
    miqp = build_reformulation(inst, _dual(2, beta={(0, 1): 0.5}))
    assert sorted(miqp.t_index) == [(0, 0), (0, 1), (0, 2)]
    r = miqp.eq_families.index("digits")
    row = miqp.A_eq[r]
    assert row[0] == 1.0
    assert [-row[miqp.t_index[(0, k)]] for k in range(3)] == [1.0, 2.0, 4.0]
    assert miqp.b_eq[r] == 0.0


def test_binary_pairs_use_mccormick_only():
    inst = make_instance(3, {(0, 1): 1, (1, 2): 1}, [0, 0, 0], [[1, 1, 1]], [2], [1, 1, 4])
    miqp = build_reformulation(inst, _dual(3, lam=[0.3, 0.0, 0.2], beta={(0, 1): 0.4, (1, 2): -0.2}))
    assert set(miqp.y_index) == {(0, 1), (1, 2), (2, 2)}
    assert all(i == 2 for (i, _k) in miqp.t_index)
    # lambda of a binary variable goes on x itself
    assert miqp.linear[0] == pytest.approx(0.3)


def test_ensure_concavity_single_square():
    inst = make_instance(1, {(0, 0): 1}, [0], [], [], [3])
    miqp = build_reformulation(inst, _dual(1))
    assert miqp.hessian[0, 0] == 2.0
    fixed = ensure_concavity(miqp)
    assert fixed.lam[0] == pytest.approx(2.0, abs=1e-7)
    assert fixed.hessian[0, 0] == pytest.approx(-2.0, abs=1e-7)
    assert fixed.concavity_shift == pytest.approx(2.0, abs=1e-7)


def test_concave_input_is_returned_unchanged():
    inst = make_instance(2, {(0, 0): -1, (1, 1): -2}, [0, 0], [], [], [2, 2])
    miqp = build_reformulation(inst, _dual(2))
    assert ensure_concavity(miqp) is miqp


def test_concavity_after_loose_bundle():
    inst = clip_eiqp(generate_eiqp(1, 5, 11), 3)
    dual = compute_beta(build_base_relaxation(inst), 8, tol=1e-3, max_iter=20)
    miqp = ensure_concavity(build_reformulation(inst, dual))
    assert np.linalg.eigvalsh(miqp.hessian)[-1] <= 1e-8


def test_equivalence_on_complete_graph_any_dual():
    inst = complete_kcluster(3, 2)
    for beta in ({}, {(0, 1): 1.0, (1, 2): -0.5}):
        miqp = build_reformulation(inst, _dual(3, alpha=-1.0, lam=[0.2, -0.1, 0.0], beta=beta))
        assert check_equivalence(inst, miqp, (1, 1, 0))
        assert check_equivalence(inst, miqp, (1, 1, 0), exact=False)


def test_equivalence_rejects_infeasible_point():
    inst = complete_kcluster(3, 2)
    miqp = build_reformulation(inst, _dual(3))
    with pytest.raises(EquivalenceError) as err:
        check_equivalence(inst, miqp, (1, 1, 1))
    assert err.value.family == "original"


def test_equivalence_names_violated_family():
    inst = make_instance(2, {(0, 1): 1}, [0, 0], [], [], [3, 3])
    miqp = build_reformulation(inst, _dual(2, beta={(0, 1): 0.5}))
    # break the pair McCormick upper row by tightening its right-hand side
    r = miqp.ineq_families.index("pair_le_uj_xi")
    miqp.h.setflags(write=True)
    miqp.h[r] = -1.0
    with pytest.raises(EquivalenceError) as err:
        check_equivalence(inst, miqp, (3, 3))
    assert err.value.family == "pair_le_uj_xi"


def test_equivalence_after_bundle_on_clipped_eiqp():
    inst = clip_eiqp(generate_eiqp(1, 4, 3), 3)
    dual = compute_beta(build_base_relaxation(inst), 24, tol=1e-6)
    miqp = ensure_concavity(build_reformulation(inst, dual))
    pts = list(feasible_points(inst))
    assert pts
    for x in pts:
        assert check_equivalence(inst, miqp, x)
        assert check_equivalence(inst, miqp, x, exact=False)


def test_moderate_alpha_keeps_curvature():
    rng = np.random.default_rng(0)
    L = rng.normal(size=(4, 4))
    H0 = L + L.T
    a = rng.integers(1, 5, size=(1, 4)).astype(float)
    P = a.T @ a
    alpha = -1e6
    mod = moderate_alpha(H0, P, alpha)
    assert alpha <= mod <= 0.0
    top = lambda s: np.linalg.eigvalsh(H0 + 2 * s * P)[-1]
    assert top(mod) <= max(top(alpha), 0.0) + 1e-6 * (1 + np.abs(H0).max()) + 1e-12
    assert moderate_alpha(H0, P, 2.0) == 2.0


def test_miqp_json(tmp_path):
    inst = make_instance(2, {(0, 1): 1}, [0, 0], [[1, 1]], [3], [2, 2])
    miqp = ensure_concavity(build_reformulation(inst, _dual(2, alpha=-0.5, beta={(0, 1): 0.25})))
    save_miqp(miqp, tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["variables"]["y"] == [[1, 2]]
    assert d["multipliers"]["beta"] == [[1, 2, 0.25]]
    assert len(d["objective"]["linear"]) == miqp.num_vars
    fams = {row["family"] for row in d["inequalities"]}
    assert {"pair_le_uj_xi", "pair_le_ui_xj", "pair_ge_secant", "z_le_factor"} <= fams


@st.composite
def instance_and_dual(draw):
    n = draw(st.integers(2, 4))
    u = draw(st.lists(st.integers(1, 4), min_size=n, max_size=n))
    q = {(i, j): draw(st.integers(-5, 5)) for i in range(n) for j in range(i, n)}
    c = draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n))
    m = draw(st.integers(0, 1))
    x0 = [draw(st.integers(0, ui)) for ui in u]
    a = [draw(st.lists(st.integers(0, 3), min_size=n, max_size=n)) for _ in range(m)]
    b = [sum(ai * xi for ai, xi in zip(row, x0)) for row in a]
    inst = make_instance(n, q, c, a, b, u, sense=draw(st.sampled_from(["max", "min"])))
    fl = st.floats(-3, 3, allow_nan=False)
    beta = {}
    for i in range(n):
        for j in range(i + 1, n):
            if draw(st.booleans()):
                beta[(i, j)] = draw(fl)
    dual = _dual(n, alpha=-draw(st.floats(0, 5)), lam=draw(st.lists(fl, min_size=n, max_size=n)), beta=beta)
    return inst, dual


@settings(max_examples=60, deadline=None)
@given(instance_and_dual())
def test_induced_points_satisfy_every_family(data):
    inst, dual = data
    miqp = ensure_concavity(build_reformulation(inst, dual))
    for x in feasible_points(inst):
        v = np.array(induced_point(miqp, x), dtype=float)
        assert np.allclose(miqp.A_eq @ v, miqp.b_eq)
        assert np.all(miqp.G @ v <= miqp.h + 1e-9)
        assert check_equivalence(inst, miqp, x)
        assert check_equivalence(inst, miqp, x, exact=False)


@settings(max_examples=60, deadline=None)
@given(instance_and_dual())
def test_concavity_property(data):
    inst, dual = data
    miqp = ensure_concavity(build_reformulation(inst, dual))
    assert np.linalg.eigvalsh(miqp.hessian)[-1] <= 1e-8
    assert miqp.concavity_shift >= 0.0
