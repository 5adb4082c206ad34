"""Seeded instance sets and an independent enumerator shared by the tests."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from qcrbundle.instances import QpInstance, clip_eiqp, generate_eiqp, generate_kcluster


def kc_set() -> list[QpInstance]:
    """50 k-cluster instances, n in {8, 10, 12}, d in {0.25, 0.5, 0.75}, n/4 <= k <= 3n/4."""
    out = []
    for idx in range(50):
        n = (8, 10, 12)[idx % 3]
        d = (0.25, 0.5, 0.75)[(idx // 3) % 3]
        ks = list(range(max(3, math.ceil(n / 4)), min(n - 2, (3 * n) // 4) + 1))
        k = ks[(idx // 9) % len(ks)]
        out.append(generate_kcluster(n, d, k, idx))
    return out


def eiqp_set() -> list[QpInstance]:
    """20 clipped EIQP instances with n in {4, 5, 6} and box [0, 2] or [0, 3]."""
    out = []
    for s in range(20):
        cls = 1 + s % 2
        n = (4, 5, 6)[s % 3]
        cap = (2, 3)[(s // 3) % 2]
        out.append(clip_eiqp(generate_eiqp(cls, n, 200 + s), cap))
    return out


def trend_set() -> list[QpInstance]:
    """10 k-cluster instances with n = 12."""
    out = []
    for s in range(10):
        d = (0.25, 0.5, 0.75)[s % 3]
        k = (4, 6, 8, 5, 7)[s % 5]
        out.append(generate_kcluster(12, d, k, 100 + s))
    return out


def nested_loop_optimum(inst: QpInstance) -> Fraction:
    """Enumerator written independently of the library one (max or min)."""
    Q = {}
    for (i, j), v in inst.q:
        Q[(i, j)] = Fraction(v)
    best = None
    for x in itertools.product(*[range(u + 1) for u in inst.u]):
        ok = True
        for row, rhs in zip(inst.a, inst.b):
            acc = 0
            for a, xi in zip(row, x):
                acc += a * xi
            if acc != rhs:
                ok = False
                break
        if not ok:
            continue
        val = Fraction(0)
        for i in range(inst.n):
            val += Fraction(inst.c[i]) * x[i]
            for j in range(i, inst.n):
                if (i, j) in Q:
                    val += Q[(i, j)] * x[i] * x[j]
        if best is None or (val > best if inst.sense == "max" else val < best):
            best = val
    return best
