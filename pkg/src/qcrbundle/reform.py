"""Equivalent concave MIQP built from dual multipliers (alpha, lambda, beta).

The perturbed objective is

    f_abl(x, y) = f(x) + alpha * sum_r (a_r'x - b_r)^2
                  + sum_i lambda_i (y_ii - x_i^2) + sum_{i<j} beta_ij (y_ij - x_i x_j)

and y is tied to the products x_i x_j by a linear system.  For a pair that
needs a product variable, one index is expanded in binary digits
x_i = sum_k 2^k t_ik, each z_ijk = t_ik x_j gets the exact McCormick block
for a binary times a bounded integer, and y_ij = sum_k 2^k z_ijk.  The
plain McCormick rows on y_ij are kept as well.  When either bound of the
pair is 1 the McCormick rows alone are exact and no digits are created;
for u_i = 1 the square x_i^2 equals x_i and y_ii is not needed at all.

Variables are stored in one vector ordered x, t, z, y.  The objective is a
maximisation: 0.5 x'Hx + linear'v + constant with H restricted to x.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .instances import QpInstance, evaluate_objective

CONCAVITY_TOL = 1e-8
CONCAVITY_MARGIN = 1e-8
# relative eigenvalue budget spent when shrinking |alpha| (see moderate_alpha)
ALPHA_BUDGET = 1e-6


class ReformulationError(ValueError):
    pass


class EquivalenceError(ValueError):
    """An induced point violates a constraint family, or x is not feasible."""

    def __init__(self, message: str, family: str | None = None):
        super().__init__(message)
        self.family = family


@dataclass(frozen=True, eq=False)
class ReformulatedMiqp:
    inst: QpInstance  # maximization form
    alpha: float
    lam: np.ndarray
    beta: dict[tuple[int, int], float]  # i < j, nonzero only
    var_names: tuple[str, ...]
    t_index: dict[tuple[int, int], int]
    z_index: dict[tuple[int, int, int], int]
    y_index: dict[tuple[int, int], int]  # i <= j
    hessian: np.ndarray  # n x n, x-part only
    linear: np.ndarray
    constant: float
    A_eq: np.ndarray
    b_eq: np.ndarray
    eq_families: tuple[str, ...]
    G: np.ndarray  # G v <= h
    h: np.ndarray
    ineq_families: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray  # bool mask
    zero_tol: float = 1e-6
    concavity_shift: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.inst.n

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    def full_hessian(self) -> np.ndarray:
        H = np.zeros((self.num_vars, self.num_vars))
        H[: self.n, : self.n] = self.hessian
        return H

    def objective(self, v) -> float:
        v = np.asarray(v, dtype=float)
        x = v[: self.n]
        return float(0.5 * x @ self.hessian @ x + self.linear @ v + self.constant)

    def max_eigenvalue(self) -> float:
        if self.n == 0:
            return -math.inf
        return float(sla.eigvalsh(self.hessian)[-1])


def num_bits(u: int) -> int:
    """Digits needed for 0..u in base 2, i.e. floor(log2 u) + 1."""
    if u < 1:
        raise ReformulationError(f"cannot expand a variable with upper bound {u}")
    return int(u).bit_length()


def digits(v: int, nbits: int) -> list[int]:
    return [(v >> k) & 1 for k in range(nbits)]


def _threshold(dual, n: int, zero_tol: float) -> tuple[float, np.ndarray, dict]:
    lam = np.array(dual.lambda_, dtype=float).reshape(n)
    lam[np.abs(lam) < zero_tol] = 0.0
    beta = {}
    for (i, j), v in sorted(dual.beta.items()):
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ReformulationError(f"invalid beta key ({i}, {j})")
        a, b = min(i, j), max(i, j)
        beta[(a, b)] = beta.get((a, b), 0.0) + float(v)
    beta = {k: v for k, v in beta.items() if abs(v) >= zero_tol}
    return float(dual.alpha), lam, beta


def build_reformulation(inst: QpInstance, dual, zero_tol: float = 1e-6, moderate: bool = True) -> ReformulatedMiqp:
    """Reformulated MIQP for ``inst`` with multipliers taken from ``dual``.

    ``dual`` needs ``alpha``, ``lambda_`` (length n) and ``beta`` (dict keyed
    by 0-based pairs).  Entries of lambda and beta below ``zero_tol`` in
    magnitude are treated as zero.  With ``moderate`` the penalty weight
    alpha is shrunk toward zero first (see moderate_alpha).
    """
    inst = inst.as_max()
    alpha, lam, beta = _threshold(dual, inst.n, zero_tol)
    if moderate and inst.m:
        base = _assemble(inst, 0.0, lam, beta, zero_tol)
        A = inst.a_matrix()
        alpha = moderate_alpha(base.hessian, A.T @ A, alpha)
    return _assemble(inst, alpha, lam, beta, zero_tol)


def moderate_alpha(H0: np.ndarray, P: np.ndarray, alpha: float, budget: float = ALPHA_BUDGET) -> float:
    """Smallest-magnitude a in [alpha, 0] with lambda_max(H0 + 2aP) <= target.

    The penalty vanishes on the equality-feasible set, so alpha only matters
    through the Hessian.  Near-singular duals can return a huge |alpha|,
    which makes the expanded objective lose precision to cancellation.  The
    target is lambda_max at alpha plus ``budget * (1 + max|H0|)``; whatever
    positive curvature remains is removed by ensure_concavity.
    """
    if alpha >= 0.0:
        return alpha

    def top(a):
        return float(np.linalg.eigvalsh(H0 + 2.0 * a * P)[-1])

    target = max(top(alpha), 0.0) + budget * (1.0 + float(np.abs(H0).max(initial=0.0)))
    if top(0.0) <= target:
        return 0.0
    # lambda_max is nondecreasing in a since P is psd; bisect on log|a|
    lo, hi = 0.0, math.log(-alpha)  # hi always feasible
    lo = min(lo, hi)
    if top(-math.exp(lo)) <= target:
        return -math.exp(lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if top(-math.exp(mid)) <= target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-3:
            break
    return -math.exp(hi)


def _assemble(inst: QpInstance, alpha: float, lam: np.ndarray, beta: dict, zero_tol: float,
              shift: float = 0.0) -> ReformulatedMiqp:
    n = inst.n
    u = [int(v) for v in inst.u]

    # which products need a y variable and which rows need digits
    # for u_i <= 1 the square x_i^2 equals x_i, so y_ii is not needed
    y_pairs: list[tuple[int, int]] = [(i, i) for i in range(n) if lam[i] != 0.0 and u[i] > 1]
    y_pairs += sorted(beta)
    y_pairs.sort()
    expand: dict[tuple[int, int], int | None] = {}
    for i, j in y_pairs:
        if i == j:
            expand[(i, j)] = i
        elif u[i] == 1 or u[j] == 1 or u[i] == 0 or u[j] == 0:
            # McCormick is exact when one factor is binary or fixed at 0
            expand[(i, j)] = None
        else:
            expand[(i, j)] = i
    rows_needed = sorted({r for r in expand.values() if r is not None})
    for r in rows_needed:
        if u[r] == 0:
            raise ReformulationError(f"variable x[{r + 1}] has upper bound 0 but needs a binary expansion")

    names = [f"x[{i + 1}]" for i in range(n)]
    lb = [0.0] * n
    ub = [float(v) for v in u]
    integer = [True] * n
    t_index: dict[tuple[int, int], int] = {}
    for i in rows_needed:
        for k in range(num_bits(u[i])):
            t_index[(i, k)] = len(names)
            names.append(f"t[{i + 1},{k}]")
            lb.append(0.0)
            ub.append(1.0)
            integer.append(True)
    z_index: dict[tuple[int, int, int], int] = {}
    for (i, j), r in expand.items():
        if r is None:
            continue
        for k in range(num_bits(u[i])):
            z_index[(i, k, j)] = len(names)
            names.append(f"z[{i + 1},{k},{j + 1}]")
            lb.append(0.0)
            ub.append(float(u[j]))
            integer.append(False)
    y_index: dict[tuple[int, int], int] = {}
    for i, j in y_pairs:
        y_index[(i, j)] = len(names)
        names.append(f"y[{i + 1},{j + 1}]")
        lb.append(0.0)
        ub.append(float(u[i] * u[j]))
        integer.append(False)
    nv = len(names)

    eq_rows: list[np.ndarray] = []
    eq_rhs: list[float] = []
    eq_fam: list[str] = []
    in_rows: list[np.ndarray] = []
    in_rhs: list[float] = []
    in_fam: list[str] = []

    def row(coefs: dict[int, float]) -> np.ndarray:
        v = np.zeros(nv)
        for c, val in coefs.items():
            v[c] += val
        return v

    def eq(coefs, rhs, fam):
        eq_rows.append(row(coefs))
        eq_rhs.append(float(rhs))
        eq_fam.append(fam)

    def le(coefs, rhs, fam):
        in_rows.append(row(coefs))
        in_rhs.append(float(rhs))
        in_fam.append(fam)

    for r in range(inst.m):
        eq({i: float(a) for i, a in enumerate(inst.a[r]) if a != 0}, inst.b[r], "original")
    for i in rows_needed:
        coefs = {i: 1.0}
        for k in range(num_bits(u[i])):
            coefs[t_index[(i, k)]] = -(2.0**k)
        eq(coefs, 0.0, "digits")
    for (i, j), r in expand.items():
        if r is None:
            continue
        yc = y_index[(i, j)]
        coefs = {yc: 1.0}
        for k in range(num_bits(u[i])):
            zc, tc = z_index[(i, k, j)], t_index[(i, k)]
            coefs[zc] = coefs.get(zc, 0.0) - 2.0**k
            le({zc: 1.0, tc: -float(u[j])}, 0.0, "z_le_bound_times_digit")
            le({zc: 1.0, j: -1.0}, 0.0, "z_le_factor")
            # z >= x_j - u_j (1 - t)
            le({zc: -1.0, j: 1.0, tc: float(u[j])}, float(u[j]), "z_ge_factor_minus_slack")
        eq(coefs, 0.0, "product_from_digits")
    for i, j in y_pairs:
        yc = y_index[(i, j)]
        if i == j:
            le({yc: -1.0, i: 1.0}, 0.0, "square_ge_x")
            le({yc: -1.0, i: 2.0 * u[i]}, float(u[i] ** 2), "square_ge_tangent")
            le({yc: 1.0, i: -float(u[i])}, 0.0, "square_le_secant")
        else:
            le({yc: 1.0, i: -float(u[j])}, 0.0, "pair_le_uj_xi")
            le({yc: 1.0, j: -float(u[i])}, 0.0, "pair_le_ui_xj")
            le({yc: -1.0, i: float(u[j]), j: float(u[i])}, float(u[i] * u[j]), "pair_ge_secant")

    # objective
    Q = inst.q_matrix()
    A = inst.a_matrix()
    b = inst.b_vector()
    B = np.zeros((n, n))
    for (i, j), v in beta.items():
        B[i, j] = B[j, i] = v
    H = 2.0 * Q + 2.0 * alpha * (A.T @ A) - 2.0 * np.diag(lam) - B
    H = 0.5 * (H + H.T)
    lin = np.zeros(nv)
    lin[:n] = inst.c_vector() - 2.0 * alpha * (A.T @ b)
    for i in range(n):
        if lam[i] == 0.0:
            continue
        if u[i] > 1:
            lin[y_index[(i, i)]] += lam[i]
        else:
            lin[i] += lam[i]
    for (i, j), v in beta.items():
        lin[y_index[(i, j)]] += v
    const = alpha * float(b @ b)

    def stack(rows, width):
        return np.array(rows, dtype=float).reshape(len(rows), width)

    return ReformulatedMiqp(
        inst=inst,
        alpha=alpha,
        lam=lam,
        beta=dict(beta),
        var_names=tuple(names),
        t_index=t_index,
        z_index=z_index,
        y_index=y_index,
        hessian=H,
        linear=lin,
        constant=const,
        A_eq=stack(eq_rows, nv),
        b_eq=np.array(eq_rhs),
        eq_families=tuple(eq_fam),
        G=stack(in_rows, nv),
        h=np.array(in_rhs),
        ineq_families=tuple(in_fam),
        lb=np.array(lb),
        ub=np.array(ub),
        integer=np.array(integer, dtype=bool),
        zero_tol=zero_tol,
        concavity_shift=shift,
    )


def ensure_concavity(miqp: ReformulatedMiqp) -> ReformulatedMiqp:
    """Shift every lambda_i by the largest Hessian eigenvalue when it is positive.

    Raising lambda_i by eps lowers the Hessian diagonal by 2 eps, so the
    result has largest eigenvalue at most -eps.
    """
    try:
        eps = miqp.max_eigenvalue()
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ReformulationError(f"eigenvalue computation failed: {exc}") from exc
    if not math.isfinite(eps) or eps <= CONCAVITY_TOL:
        return miqp
    shift = eps + CONCAVITY_MARGIN
    lam = miqp.lam + shift
    out = _assemble(miqp.inst, miqp.alpha, lam, miqp.beta, miqp.zero_tol, miqp.concavity_shift + shift)
    if out.max_eigenvalue() > CONCAVITY_TOL:
        raise ReformulationError(f"concavity repair failed, largest eigenvalue {out.max_eigenvalue():.3e}")
    return out


# ---------------------------------------------------------------- equivalence


def induced_point(miqp: ReformulatedMiqp, x: Sequence[int]) -> list[int]:
    """(x, t, z, y) with t the binary digits of x and y, z the exact products."""
    v = [0] * miqp.num_vars
    for i, xi in enumerate(x):
        v[i] = int(xi)
    for (i, k), c in miqp.t_index.items():
        v[c] = (int(x[i]) >> k) & 1
    for (i, k, j), c in miqp.z_index.items():
        v[c] = ((int(x[i]) >> k) & 1) * int(x[j])
    for (i, j), c in miqp.y_index.items():
        v[c] = int(x[i]) * int(x[j])
    return v


def _check_rows(M: np.ndarray, rhs: np.ndarray, fams: Sequence[str], v: list[int], equality: bool) -> None:
    for r in range(M.shape[0]):
        nz = np.flatnonzero(M[r])
        lhs = sum(Fraction(float(M[r, c])) * v[c] for c in nz)
        target = Fraction(float(rhs[r]))
        ok = lhs == target if equality else lhs <= target
        if not ok:
            raise EquivalenceError(f"constraint family '{fams[r]}' violated at row {r}: {lhs} vs {target}", fams[r])


def _exact_perturbed(miqp: ReformulatedMiqp, x: Sequence[int], v: list[int]) -> Fraction:
    """f_abl at (x, y) from the multipliers, expanded term by term in rationals."""
    inst = miqp.inst
    n = inst.n
    alpha = Fraction(miqp.alpha)
    lam = [Fraction(float(li)) for li in miqp.lam]
    # quadratic coefficients in x and the linear part, fully expanded
    quad: dict[tuple[int, int], Fraction] = {}
    lin = [Fraction(ci) for ci in inst.c]
    const = Fraction(0)
    for (i, j), q in inst.q:
        quad[(i, j)] = quad.get((i, j), Fraction(0)) + Fraction(q)
    for r in range(inst.m):
        a = [Fraction(ar) for ar in inst.a[r]]
        br = Fraction(inst.b[r])
        for i in range(n):
            if a[i] == 0:
                continue
            quad[(i, i)] = quad.get((i, i), Fraction(0)) + alpha * a[i] * a[i]
            for j in range(i + 1, n):
                if a[j] != 0:
                    quad[(i, j)] = quad.get((i, j), Fraction(0)) + 2 * alpha * a[i] * a[j]
            lin[i] -= 2 * alpha * br * a[i]
        const += alpha * br * br
    total = const
    for (i, j), q in quad.items():
        total += q * x[i] * x[j]
    for i in range(n):
        total += lin[i] * x[i]
    u = inst.u
    for i in range(n):
        if lam[i] == 0:
            continue
        yii = v[miqp.y_index[(i, i)]] if (i, i) in miqp.y_index else x[i]
        total += lam[i] * (yii - x[i] * x[i])
    for (i, j), b in miqp.beta.items():
        total += Fraction(b) * (v[miqp.y_index[(i, j)]] - x[i] * x[j])
    return total


def check_equivalence(inst: QpInstance, miqp: ReformulatedMiqp, x: Sequence[int], exact: bool = True,
                      tol: float = 1e-9) -> bool:
    """Whether f_abl at the induced point equals f(x).

    Raises EquivalenceError when x is not feasible for the original problem
    or the induced point breaks a constraint family (the family is named).
    ``exact`` selects rational arithmetic; otherwise the stored float
    objective is compared with relative tolerance ``tol``.
    """
    inst = inst.as_max()
    if len(x) != inst.n or any(int(xi) != xi for xi in x):
        raise EquivalenceError("point must be an integer vector of length n")
    x = [int(xi) for xi in x]
    if not inst.is_feasible(x):
        raise EquivalenceError("point is not feasible for the linear equalities and box", "original")
    v = induced_point(miqp, x)
    for c, (lo, hi) in enumerate(zip(miqp.lb, miqp.ub)):
        if not (Fraction(float(lo)) <= v[c] <= Fraction(float(hi))):
            raise EquivalenceError(f"variable {miqp.var_names[c]} = {v[c]} outside [{lo}, {hi}]", "bounds")
    _check_rows(miqp.A_eq, miqp.b_eq, miqp.eq_families, v, equality=True)
    _check_rows(miqp.G, miqp.h, miqp.ineq_families, v, equality=False)
    f = evaluate_objective(inst, x)
    if exact:
        return _exact_perturbed(miqp, x, v) == f
    val = miqp.objective(np.array(v, dtype=float))
    return abs(val - float(f)) <= tol * (1.0 + abs(float(f)))


# ---------------------------------------------------------------- JSON


def miqp_to_dict(miqp: ReformulatedMiqp) -> dict:
    """JSON-ready description; indices inside names and blocks are 1-based.

    Layout: the instance fields (name, sense, n, u) followed by
    ``multipliers`` (alpha, lambda, beta as [i, j, value]), ``variables``
    (x count plus t [i, k], z [i, k, j] and y [i, j] lists in column order),
    ``objective`` (x-Hessian, dense linear vector over all columns,
    constant), and ``equalities`` / ``inequalities`` as lists of
    {family, coef: [[column, value]...], rhs} with columns 1-based.
    """

    def sparse(M, rhs, fams):
        out = []
        for r in range(M.shape[0]):
            nz = np.flatnonzero(M[r])
            out.append({"family": fams[r], "coef": [[int(c) + 1, float(M[r, c])] for c in nz], "rhs": float(rhs[r])})
        return out

    inst = miqp.inst
    return {
        "name": inst.name,
        "sense": "max",
        "n": inst.n,
        "u": list(inst.u),
        "multipliers": {
            "alpha": miqp.alpha,
            "lambda": [float(v) for v in miqp.lam],
            "beta": [[i + 1, j + 1, v] for (i, j), v in sorted(miqp.beta.items())],
            "zero_tol": miqp.zero_tol,
            "concavity_shift": miqp.concavity_shift,
        },
        "variables": {
            "x": inst.n,
            "t": [[i + 1, k] for (i, k) in miqp.t_index],
            "z": [[i + 1, k, j + 1] for (i, k, j) in miqp.z_index],
            "y": [[i + 1, j + 1] for (i, j) in miqp.y_index],
        },
        "objective": {
            "hessian": miqp.hessian.tolist(),
            "linear": miqp.linear.tolist(),
            "constant": miqp.constant,
        },
        "equalities": sparse(miqp.A_eq, miqp.b_eq, miqp.eq_families),
        "inequalities": sparse(miqp.G, miqp.h, miqp.ineq_families),
    }


def save_miqp(miqp: ReformulatedMiqp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(miqp_to_dict(miqp), indent=1) + "\n")
