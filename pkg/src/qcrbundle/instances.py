"""Integer quadratic program instances: data model, JSON files, generators.

An instance is

    max/min  sum_{i<=j} q_ij x_i x_j + sum_i c_i x_i
    s.t.     A x = b,  0 <= x_i <= u_i,  x_i integer.

Indices are 0-based in memory and 1-based in files.  Random instances are
drawn from numpy's PCG64 bit generator seeded with the caller's integer, so
a (family, parameters, seed) triple always reproduces the same instance.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

Number = int | float


class InstanceError(ValueError):
    """Raised for malformed instance files or violated instance invariants."""


class InfeasibleInstance(InstanceError):
    pass


class EnumerationTooLarge(InstanceError):
    pass


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _is_integral(v: Number) -> bool:
    return float(v).is_integer()


def _canon(v: Number) -> Number:
    # integral floats are stored as ints so that round trips are stable
    if isinstance(v, bool):
        raise InstanceError(f"boolean is not a number: {v!r}")
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


@dataclass(frozen=True)
class QpInstance:
    n: int
    sense: str
    q: tuple[tuple[tuple[int, int], Number], ...]
    c: tuple[Number, ...]
    a: tuple[tuple[int, ...], ...]
    b: tuple[int, ...]
    u: tuple[int, ...]
    name: str = "instance"

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise InstanceError(f"n must be a positive integer, got {self.n!r}")
        if self.sense not in ("max", "min"):
            raise InstanceError(f"sense must be 'max' or 'min', got {self.sense!r}")
        if len(self.c) != self.n:
            raise InstanceError(f"c has length {len(self.c)}, expected n={self.n}")
        if len(self.u) != self.n:
            raise InstanceError(f"u has length {len(self.u)}, expected n={self.n}")
        for i, ui in enumerate(self.u):
            if not isinstance(ui, int) or ui < 1:
                raise InstanceError(f"u_i >= 1 violated: u[{i + 1}] = {ui!r}")
        if len(self.a) != len(self.b):
            raise InstanceError(f"A has {len(self.a)} rows but b has {len(self.b)} entries")
        for r, row in enumerate(self.a):
            if len(row) != self.n:
                raise InstanceError(f"A row {r + 1} has length {len(row)}, expected n={self.n}")
            if not all(isinstance(v, int) for v in row):
                raise InstanceError(f"A row {r + 1} has non-integer entries")
        for r, br in enumerate(self.b):
            if not isinstance(br, int):
                raise InstanceError(f"b_r integral violated: b[{r + 1}] = {br!r}")
        seen = set()
        for (i, j), _ in self.q:
            if not (0 <= i <= j < self.n):
                raise InstanceError(f"q entry ({i + 1},{j + 1}) outside upper triangle of order {self.n}")
            if (i, j) in seen:
                raise InstanceError(f"duplicate q entry ({i + 1},{j + 1})")
            seen.add((i, j))

    @property
    def m(self) -> int:
        return len(self.b)

    def q_dict(self) -> dict[tuple[int, int], Number]:
        return dict(self.q)

    def q_matrix(self) -> np.ndarray:
        """Symmetric matrix Q with f(x) = x'Qx + c'x."""
        Q = np.zeros((self.n, self.n))
        for (i, j), v in self.q:
            if i == j:
                Q[i, i] += v
            else:
                Q[i, j] += v / 2.0
                Q[j, i] += v / 2.0
        return Q

    def a_matrix(self) -> np.ndarray:
        return np.array(self.a, dtype=float).reshape(self.m, self.n)

    def c_vector(self) -> np.ndarray:
        return np.array(self.c, dtype=float)

    def b_vector(self) -> np.ndarray:
        return np.array(self.b, dtype=float)

    def u_vector(self) -> np.ndarray:
        return np.array(self.u, dtype=float)

    def is_binary(self) -> bool:
        return all(ui == 1 for ui in self.u)

    def has_integral_data(self) -> bool:
        return all(_is_integral(v) for _, v in self.q) and all(_is_integral(v) for v in self.c)

    def as_max(self) -> "QpInstance":
        """Maximization form: negate q and c for minimization instances."""
        if self.sense == "max":
            return self
        return QpInstance(
            n=self.n,
            sense="max",
            q=tuple((ij, _canon(-v)) for ij, v in self.q),
            c=tuple(_canon(-v) for v in self.c),
            a=self.a,
            b=self.b,
            u=self.u,
            name=self.name,
        )

    def box_size(self) -> int:
        return math.prod(ui + 1 for ui in self.u)

    def is_feasible(self, x: Sequence[int]) -> bool:
        if len(x) != self.n:
            return False
        if any(not (0 <= xi <= ui) for xi, ui in zip(x, self.u)):
            return False
        return all(sum(ar * xi for ar, xi in zip(row, x)) == br for row, br in zip(self.a, self.b))


def make_instance(
    n: int,
    q: dict[tuple[int, int], Number],
    c: Sequence[Number],
    a: Sequence[Sequence[int]],
    b: Sequence[int],
    u: Sequence[int],
    sense: str = "max",
    name: str = "instance",
) -> QpInstance:
    """Build an instance from 0-based data, folding (j,i) keys onto (i,j).

    Zero coefficients are dropped from q.
    """
    merged: dict[tuple[int, int], Number] = {}
    for (i, j), v in q.items():
        key = (min(i, j), max(i, j))
        if key in merged and key != (i, j) and merged[key] != v:
            raise InstanceError(f"non-symmetric duplicate q entries ({i + 1},{j + 1})/({j + 1},{i + 1})")
        if key in merged and key == (i, j):
            raise InstanceError(f"duplicate q entry ({i + 1},{j + 1})")
        merged[key] = v
    qt = tuple(sorted((k, _canon(v)) for k, v in merged.items() if v != 0))
    return QpInstance(
        n=n,
        sense=sense,
        q=qt,
        c=tuple(_canon(v) for v in c),
        a=tuple(tuple(_canon(v) for v in row) for row in a),
        b=tuple(_canon(v) for v in b),
        u=tuple(_canon(v) for v in u),
        name=name,
    )


# ---------------------------------------------------------------- file I/O


def instance_to_dict(inst: QpInstance) -> dict:
    return {
        "name": inst.name,
        "sense": inst.sense,
        "n": inst.n,
        "u": list(inst.u),
        "c": list(inst.c),
        "Q": [[i + 1, j + 1, v] for (i, j), v in inst.q],
        "A": [list(row) for row in inst.a],
        "b": list(inst.b),
    }


def dumps_instance(inst: QpInstance) -> str:
    """Canonical text: one top-level key per line, compact values."""
    d = instance_to_dict(inst)
    lines = [f"  {json.dumps(k)}: {json.dumps(v, separators=(', ', ': '))}" for k, v in d.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def save_instance(inst: QpInstance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst))


def instance_from_dict(d: dict, source: str = "<dict>") -> QpInstance:
    def need(key, kind):
        if key not in d:
            raise InstanceError(f"{source}: missing field {key!r}")
        v = d[key]
        if not isinstance(v, kind):
            raise InstanceError(f"{source}: field {key!r} has type {type(v).__name__}")
        return v

    n = need("n", int)
    sense = need("sense", str)
    u = need("u", list)
    c = need("c", list)
    qlist = need("Q", list)
    A = d.get("A", [])
    b = d.get("b", [])
    if not isinstance(A, list) or not isinstance(b, list):
        raise InstanceError(f"{source}: fields 'A' and 'b' must be lists")
    for k, v in enumerate(u):
        if not (isinstance(v, (int, float)) and _is_integral(v)):
            raise InstanceError(f"{source}: u[{k + 1}] = {v!r} is not an integer")
        if v < 1:
            raise InstanceError(f"{source}: u_i >= 1 violated: u[{k + 1}] = {v!r}")
    for r, v in enumerate(b):
        if not (isinstance(v, (int, float)) and _is_integral(v)):
            raise InstanceError(f"{source}: b_r integral violated: b[{r + 1}] = {v!r}")
    for r, row in enumerate(A):
        if not isinstance(row, list):
            raise InstanceError(f"{source}: A row {r + 1} is not a list")
        for v in row:
            if not (isinstance(v, (int, float)) and _is_integral(v)):
                raise InstanceError(f"{source}: A row {r + 1} has non-integer entry {v!r}")
    q: dict[tuple[int, int], Number] = {}
    raw: set[tuple[int, int]] = set()
    for k, entry in enumerate(qlist):
        if not (isinstance(entry, list) and len(entry) == 3):
            raise InstanceError(f"{source}: Q entry {k + 1} must be [i, j, q]")
        i, j, v = entry
        if not (isinstance(i, int) and isinstance(j, int) and 1 <= i <= n and 1 <= j <= n):
            raise InstanceError(f"{source}: Q entry {k + 1} has invalid indices ({i}, {j})")
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise InstanceError(f"{source}: Q entry {k + 1} has non-numeric coefficient {v!r}")
        if (i, j) in raw:
            raise InstanceError(f"{source}: duplicate Q entry ({i},{j})")
        raw.add((i, j))
        key = (min(i, j) - 1, max(i, j) - 1)
        if key in q:
            # (j,i) mirrors an (i,j) already read: accepted only if symmetric
            if q[key] != v:
                raise InstanceError(f"{source}: non-symmetric duplicate Q entries ({i},{j})/({j},{i})")
            continue
        q[key] = v
    try:
        return make_instance(n, q, c, A, b, u, sense=sense, name=d.get("name", "instance"))
    except InstanceError as exc:
        raise InstanceError(f"{source}: {exc}") from None


def loads_instance(text: str, source: str = "<string>") -> QpInstance:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(d, dict):
        raise InstanceError(f"{source}: top-level value must be an object")
    return instance_from_dict(d, source)


def load_instance(path: str | Path) -> QpInstance:
    path = Path(path)
    return loads_instance(path.read_text(), source=str(path))


# ---------------------------------------------------------------- generators


def kcluster_instance(n: int, edges: Sequence[tuple[int, int]], k: int, name: str | None = None) -> QpInstance:
    """k-cluster instance for an explicit 0-based edge list."""
    q = {(min(i, j), max(i, j)): 1 for i, j in edges}
    return make_instance(n, q, [0] * n, [[1] * n], [k], [1] * n, sense="max", name=name or f"kc_n{n}_k{k}")


def complete_kcluster(n: int, k: int) -> QpInstance:
    return kcluster_instance(n, list(itertools.combinations(range(n), 2)), k, name=f"kc_complete_n{n}_k{k}")


def generate_kcluster(n: int, d: float, k: int, seed: int) -> QpInstance:
    """Random densest-k-subgraph instance.

    Each pair i<j (lexicographic order) receives an edge independently with
    probability d.
    """
    if not (0.0 < d <= 1.0):
        raise InstanceError(f"density must lie in (0, 1], got {d}")
    if not (3 <= k <= n - 2):
        raise InstanceError(f"k must lie in {{3, ..., n-2}} = {{3, ..., {n - 2}}}, got {k}")
    rng = _rng(seed)
    edges = [(i, j) for i, j in itertools.combinations(range(n), 2) if rng.random() < d]
    return kcluster_instance(n, edges, k, name=f"kc_n{n}_d{d:g}_k{k}_s{seed}")


EIQP_CLASSES = {
    1: {"a_high": 50, "mu": 15, "u": 30},
    2: {"a_high": 100, "mu": 20, "u": 50},
}


def generate_eiqp(cls: int, n: int, seed: int) -> QpInstance:
    """Equality-constrained integer QP (minimization, one equality row)."""
    if cls not in EIQP_CLASSES:
        raise InstanceError(f"EIQP class must be 1 or 2, got {cls!r}")
    if n < 1:
        raise InstanceError(f"n must be >= 1, got {n}")
    par = EIQP_CLASSES[cls]
    rng = _rng(seed)
    q = {}
    for i in range(n):
        for j in range(i, n):
            q[(i, j)] = int(rng.integers(-100, 101))
    c = [int(v) for v in rng.integers(-100, 101, size=n)]
    a = [int(v) for v in rng.integers(1, par["a_high"] + 1, size=n)]
    b = par["mu"] * sum(a)
    return make_instance(n, q, c, [a], [b], [par["u"]] * n, sense="min", name=f"eiqp{cls}_n{n}_s{seed}")


def clip_eiqp(inst: QpInstance, cap: int) -> QpInstance:
    """Shrink an EIQP instance to the box [0, cap]^n for enumeration tests.

    The right-hand side is re-centred as b = ceil(cap/2) * sum(a) so that the
    constant point x_i = ceil(cap/2) stays feasible.
    """
    if inst.m != 1:
        raise InstanceError("clip_eiqp expects a single equality row")
    mu = (cap + 1) // 2
    a = inst.a[0]
    return QpInstance(
        n=inst.n,
        sense=inst.sense,
        q=inst.q,
        c=inst.c,
        a=inst.a,
        b=(mu * sum(a),),
        u=tuple(min(ui, cap) for ui in inst.u),
        name=f"{inst.name}_cap{cap}",
    )


def generate_iep(n: int, m: int, p: int, seed: int) -> QpInstance:
    """Integer equipartition: n item types, m items per type, p sets.

    Variable x[i*p + k] counts the items of type i placed in set k.
    """
    if n < 1 or m < 1 or p < 1:
        raise InstanceError("n, m and p must be positive")
    if (n * m) % p != 0:
        raise InstanceError(f"p = {p} does not divide n*m = {n * m}")
    rng = _rng(seed)
    cost = {}
    for i in range(n):
        for j in range(i, n):
            cost[(i, j)] = int(rng.integers(1, 11))
    size = n * m // p
    nv = n * p
    q: dict[tuple[int, int], int] = {}
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(p):
                for l in range(p):
                    if k != l:
                        q[(i * p + k, j * p + l)] = q.get((i * p + k, j * p + l), 0) + cost[(i, j)]
        for k in range(p):
            for l in range(k + 1, p):
                q[(i * p + k, i * p + l)] = q.get((i * p + k, i * p + l), 0) + cost[(i, i)]
    rows, rhs = [], []
    for k in range(p):
        rows.append([1 if v % p == k else 0 for v in range(nv)])
        rhs.append(size)
    for i in range(n):
        rows.append([1 if v // p == i else 0 for v in range(nv)])
        rhs.append(m)
    ub = min(m, size)
    return make_instance(nv, q, [0] * nv, rows, rhs, [ub] * nv, sense="min", name=f"iep_n{n}_m{m}_p{p}_s{seed}")


# ---------------------------------------------------------------- evaluation


def evaluate_objective(inst: QpInstance, x: Sequence[int]) -> Fraction:
    """Exact f(x) in the instance's own sense (no feasibility check)."""
    if len(x) != inst.n:
        raise InstanceError(f"point has dimension {len(x)}, expected {inst.n}")
    total = Fraction(0)
    for (i, j), v in inst.q:
        total += Fraction(v) * x[i] * x[j]
    for ci, xi in zip(inst.c, x):
        total += Fraction(ci) * xi
    return total


def _colex_points(u: Sequence[int]) -> Iterator[tuple[int, ...]]:
    # first coordinate varies fastest
    for rev in itertools.product(*(range(ui + 1) for ui in reversed(u))):
        yield rev[::-1]


def feasible_points(inst: QpInstance, limit: int = 10**6) -> Iterator[tuple[int, ...]]:
    if inst.box_size() > limit:
        raise EnumerationTooLarge(f"box has {inst.box_size()} points, limit is {limit}")
    for x in _colex_points(inst.u):
        if all(sum(ar * xi for ar, xi in zip(row, x)) == br for row, br in zip(inst.a, inst.b)):
            yield x


def brute_force_optimum(inst: QpInstance, limit: int = 10**6) -> tuple[Fraction, tuple[int, ...]]:
    """Enumerate the integer box and return the best feasible point.

    Ties go to the first point in enumeration order, which runs with x_1
    varying fastest (colexicographic order).
    """
    best_val, best_x = None, None
    maximize = inst.sense == "max"
    for x in feasible_points(inst, limit):
        val = evaluate_objective(inst, x)
        if best_val is None or (val > best_val if maximize else val < best_val):
            best_val, best_x = val, x
    if best_x is None:
        raise InfeasibleInstance(f"{inst.name}: no integer point satisfies the equalities")
    return best_val, best_x
