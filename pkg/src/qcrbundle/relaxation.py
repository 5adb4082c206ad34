"""Semidefinite + RLT relaxation of an integer QP.

The lifted matrix is Z = [[1, x'], [x, X]].  The base program keeps

* the equalities A x = b,
* the aggregated squared equality  sum_r (a_r' X a_r - 2 b_r a_r'x) = -sum_r b_r^2,
* the three diagonal families   -X_ii + x_i <= 0,
                                -X_ii + 2u_i x_i - u_i^2 <= 0,
                                 X_ii - u_i x_i <= 0,

and leaves the four McCormick families on off-diagonal entries to a catalog
of dualizable inequalities h(X, x) <= 0 indexed by (i, j, t), i < j.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .conic import ConicProgram
from .instances import QpInstance

# rows sum_r b_r^2 beyond this lose exactness in double precision
_SQ_RHS_LIMIT = 2.0**53


@dataclass(frozen=True)
class LinearizationDescriptor:
    """h(X, x) = coef_X * X_ij + coef_i * x_i + coef_j * x_j + const."""

    i: int
    j: int
    t: int
    coef_X: float
    coef_i: float
    coef_j: float
    const: float


def descriptor(i: int, j: int, t: int, u) -> LinearizationDescriptor:
    """McCormick inequality of family t for the pair i < j (0-based)."""
    n = len(u)
    if not (0 <= i < j < n) or t not in (1, 2, 3, 4):
        raise ValueError(f"invalid linearization index (i={i}, j={j}, t={t}) for n={n}")
    ui, uj = float(u[i]), float(u[j])
    if t == 1:
        return LinearizationDescriptor(i, j, 1, 1.0, -uj, 0.0, 0.0)
    if t == 2:
        return LinearizationDescriptor(i, j, 2, 1.0, 0.0, -ui, 0.0)
    if t == 3:
        return LinearizationDescriptor(i, j, 3, -1.0, uj, ui, -ui * uj)
    return LinearizationDescriptor(i, j, 4, -1.0, 0.0, 0.0, 0.0)


def violation(desc: LinearizationDescriptor, X: np.ndarray, x: np.ndarray) -> float:
    return float(desc.coef_X * X[desc.i, desc.j] + desc.coef_i * x[desc.i] + desc.coef_j * x[desc.j] + desc.const)


@dataclass(frozen=True, eq=False)
class SdpRelaxation:
    inst: QpInstance  # maximization form
    base: ConicProgram
    catalog: tuple[LinearizationDescriptor, ...]
    index_map: dict[str, object]

    @property
    def n(self) -> int:
        return self.inst.n

    def __post_init__(self) -> None:
        # coefficient arrays for vectorized evaluation of the whole catalog
        cat = self.catalog
        arrays = {
            "I": np.array([d.i for d in cat], dtype=int),
            "J": np.array([d.j for d in cat], dtype=int),
            "cX": np.array([d.coef_X for d in cat]),
            "ci": np.array([d.coef_i for d in cat]),
            "cj": np.array([d.coef_j for d in cat]),
            "k": np.array([d.const for d in cat]),
        }
        object.__setattr__(self, "_arr", arrays)

    def violations(self, X: np.ndarray, x: np.ndarray) -> np.ndarray:
        """h-values of every catalog entry, in catalog order."""
        a = self._arr
        return a["cX"] * X[a["I"], a["J"]] + a["ci"] * x[a["I"]] + a["cj"] * x[a["J"]] + a["k"]

    def dualized(self, idx: np.ndarray, beta: np.ndarray) -> ConicProgram:
        """Base program with objective f - sum beta_e h_e over catalog entries ``idx``."""
        a = self._arr
        C = np.array(self.base.C, dtype=float)
        off = self.base.offset
        if len(idx):
            I = a["I"][idx] + 1
            J = a["J"][idx] + 1
            half = 0.5 * beta
            np.subtract.at(C, (I, J), half * a["cX"][idx])
            np.subtract.at(C, (J, I), half * a["cX"][idx])
            np.subtract.at(C, (0 * I, I), half * a["ci"][idx])
            np.subtract.at(C, (I, 0 * I), half * a["ci"][idx])
            np.subtract.at(C, (0 * J, J), half * a["cj"][idx])
            np.subtract.at(C, (J, 0 * J), half * a["cj"][idx])
            off = off - float(beta @ a["k"][idx])
        return self.base.with_objective(C, offset=off)

    def catalog_index(self, i: int, j: int, t: int) -> int:
        """Position of (i, j, t) in the lexicographic catalog."""
        n = self.n
        pair = i * n - i * (i + 1) // 2 + (j - i - 1)
        return 4 * pair + (t - 1)


def objective_matrix(inst: QpInstance) -> np.ndarray:
    n = inst.n
    C = np.zeros((n + 1, n + 1))
    C[1:, 1:] = inst.q_matrix()
    c = inst.c_vector()
    C[0, 1:] = c / 2.0
    C[1:, 0] = c / 2.0
    return C


def build_base_relaxation(inst: QpInstance) -> SdpRelaxation:
    inst = inst.as_max()
    n, m = inst.n, inst.m
    N = n + 1
    A = inst.a_matrix()
    b = inst.b_vector()
    u = inst.u_vector()
    mats: list[np.ndarray] = []
    slack_rows: list[int] = []
    rhs: list[float] = []
    labels: list[str] = []

    def add(mat, r, label, slack=False):
        mats.append(mat)
        rhs.append(r)
        labels.append(label)
        slack_rows.append(len(mats) - 1 if slack else -1)

    E = np.zeros((N, N))
    E[0, 0] = 1.0
    add(E, 1.0, "corner")
    for r in range(m):
        M = np.zeros((N, N))
        M[0, 1:] = A[r] / 2.0
        M[1:, 0] = A[r] / 2.0
        add(M, b[r], f"eq[{r}]")
    if m:
        sq_rhs = sum(int(br) ** 2 for br in inst.b)
        if sq_rhs > _SQ_RHS_LIMIT:
            raise OverflowError(f"sum of squared right-hand sides {sq_rhs} exceeds exact double range")
        M = np.zeros((N, N))
        M[1:, 1:] = A.T @ A
        lin = -(A.T @ b)
        M[0, 1:] = lin
        M[1:, 0] = lin
        add(M, -float(sq_rhs), "square")
    for i in range(n):
        k = i + 1
        M = np.zeros((N, N))
        M[k, k] = -1.0
        M[0, k] = M[k, 0] = 0.5
        add(M, 0.0, f"lam1[{i}]", slack=True)
        M = np.zeros((N, N))
        M[k, k] = -1.0
        M[0, k] = M[k, 0] = u[i]
        add(M, u[i] ** 2, f"lam2[{i}]", slack=True)
        M = np.zeros((N, N))
        M[k, k] = 1.0
        M[0, k] = M[k, 0] = -u[i] / 2.0
        add(M, 0.0, f"lam3[{i}]", slack=True)

    K = len(mats)
    L = sum(1 for r in slack_rows if r >= 0)
    Bm = np.zeros((K, L))
    col = 0
    for row, sr in enumerate(slack_rows):
        if sr >= 0:
            Bm[row, col] = 1.0
            col += 1
    offset_rows = 1 + m + (1 if m else 0)
    certs = []
    if m:
        # square row + (sum b_r^2) * corner = V V' with V = [-b'; A'], so every
        # feasible Z satisfies Z V = 0
        d = np.zeros(K)
        d[0] = float(sq_rhs)
        d[1 + m] = 1.0
        certs.append(d)
    for i in range(n):
        if u[i] == 1:
            # for binaries the first and third diagonal rows add up to s1 + s3 = 0
            d = np.zeros(K)
            d[offset_rows + 3 * i] = 1.0
            d[offset_rows + 3 * i + 2] = 1.0
            certs.append(d)
    base = ConicProgram(
        C=objective_matrix(inst),
        c_slack=np.zeros(L),
        A=np.array(mats).reshape(K, N, N),
        B=Bm,
        b=np.array(rhs, dtype=float),
        labels=tuple(labels),
        face_certificates=tuple(certs),
    )
    catalog = tuple(descriptor(i, j, t, inst.u) for i, j in combinations(range(n), 2) for t in (1, 2, 3, 4))
    index_map = {
        "corner": 0,
        "eq": list(range(1, 1 + m)),
        "square": 1 + m if m else None,
        "lam1": [1 + m + (1 if m else 0) + 3 * i for i in range(n)],
        "lam2": [1 + m + (1 if m else 0) + 3 * i + 1 for i in range(n)],
        "lam3": [1 + m + (1 if m else 0) + 3 * i + 2 for i in range(n)],
    }
    return SdpRelaxation(inst=inst, base=base, catalog=catalog, index_map=index_map)


def embed_point(x) -> np.ndarray:
    """Rank-one lifting Z = (1, x)(1, x)'."""
    v = np.concatenate([[1.0], np.asarray(x, dtype=float)])
    return np.outer(v, v)
