"""Dense primal-dual interior-point method for convex quadratic programs.

    minimize    0.5 x'Hx + g'x
    subject to  A x = b,   G x <= h,   lb <= x <= ub

H must be positive semidefinite.  Fixed variables are substituted out,
dependent equality rows are dropped, and finite bounds become rows of G.
Infeasibility is decided by a bound-propagation screen and, when the main
iteration does not converge, by an elastic phase-1 problem solved with the
same method.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)


class QpInfeasible(Exception):
    pass


@dataclass
class QpResult:
    x: np.ndarray
    value: float  # 0.5 x'Hx + g'x
    status: str  # optimal | infeasible | max-iter | numerical-failure
    eq_dual: np.ndarray  # multipliers of A x = b (original row order)
    ineq_dual: np.ndarray  # multipliers of G x <= h, >= 0
    iterations: int = 0


def _as2d(M, ncols: int) -> np.ndarray:
    if M is None:
        return np.zeros((0, ncols))
    M = np.asarray(M, dtype=float)
    return M.reshape(-1, ncols)


def _vec(v, size: int) -> np.ndarray:
    if v is None:
        return np.zeros(size)
    return np.asarray(v, dtype=float).reshape(size)


def activity_range(M: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest value of each row of M x over the box."""
    with np.errstate(invalid="ignore"):
        lo = np.where(M > 0, M * lb, np.where(M < 0, M * ub, 0.0)).sum(axis=1)
        hi = np.where(M > 0, M * ub, np.where(M < 0, M * lb, 0.0)).sum(axis=1)
    return lo, hi


def bounds_screen(A, b, G, h, lb, ub, tol: float = 1e-9) -> bool:
    """False when some row cannot be met anywhere in the box."""
    if np.any(lb > ub + tol):
        return False
    if A.shape[0]:
        lo, hi = activity_range(A, lb, ub)
        slack = tol * (1.0 + np.abs(b))
        if np.any(lo > b + slack) or np.any(hi < b - slack):
            return False
    if G.shape[0]:
        lo, _ = activity_range(G, lb, ub)
        if np.any(lo > h + tol * (1.0 + np.abs(h))):
            return False
    return True


def _independent_rows(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    if A.shape[0] == 0:
        return np.arange(0)
    Ab = np.hstack([A, b[:, None]])
    norms = np.linalg.norm(A, axis=1)
    zero = norms <= 1e-14
    if np.any(zero & (np.abs(b) > 1e-9)):
        raise QpInfeasible("empty equality row with nonzero right-hand side")
    idx = np.flatnonzero(~zero)
    if idx.size == 0:
        return idx
    An = A[idx] / norms[idx, None]
    _, R, piv = sla.qr(An.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > 1e-10 * max(d[0], 1.0))) if d.size else 0
    keep = np.sort(idx[piv[:rank]])
    if rank < idx.size:
        # consistency of the dropped rows
        _, R2, _ = sla.qr((Ab[idx] / norms[idx, None]).T, mode="economic", pivoting=True)
        d2 = np.abs(np.diag(R2))
        rank2 = int(np.sum(d2 > 1e-9 * max(d2[0], 1.0))) if d2.size else 0
        if rank2 > rank:
            raise QpInfeasible("inconsistent equality rows")
    return keep


def solve_qp(
    H,
    g,
    A=None,
    b=None,
    G=None,
    h=None,
    lb=None,
    ub=None,
    tol: float = 1e-8,
    max_iter: int = 100,
    check_feasibility: bool = True,
) -> QpResult:
    g = np.asarray(g, dtype=float).ravel()
    n = g.size
    H = np.zeros((n, n)) if H is None else np.asarray(H, dtype=float).reshape(n, n)
    H = (H + H.T) / 2
    A = _as2d(A, n)
    b = _vec(b, A.shape[0])
    G = _as2d(G, n)
    h = _vec(h, G.shape[0])
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).copy()
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).copy()

    def infeasible(reason: str) -> QpResult:
        log.debug("qp infeasible: %s", reason)
        return QpResult(np.full(n, np.nan), math.nan, "infeasible", np.zeros(A.shape[0]), np.zeros(G.shape[0]))

    if check_feasibility and not bounds_screen(A, b, G, h, lb, ub):
        return infeasible("bound screen")

    # substitute fixed variables
    fixed = np.isclose(lb, ub, rtol=0, atol=1e-12)
    free = ~fixed
    xf = np.where(fixed, lb, 0.0)
    Hff = H[np.ix_(free, free)]
    gf = g[free] + H[np.ix_(free, fixed)] @ xf[fixed]
    const = 0.5 * xf[fixed] @ H[np.ix_(fixed, fixed)] @ xf[fixed] + g[fixed] @ xf[fixed]
    Af = A[:, free]
    bf = b - A[:, fixed] @ xf[fixed]
    Gf = G[:, free]
    hf = h - G[:, fixed] @ xf[fixed]
    try:
        keep = _independent_rows(Af, bf)
    except QpInfeasible as exc:
        return infeasible(str(exc))
    # rows of G with no free entries are checks only
    gactive = np.abs(Gf).sum(axis=1) > 0
    if np.any(hf[~gactive] < -1e-9 * (1 + np.abs(h[~gactive]))):
        return infeasible("inequality violated by fixed variables")

    # bounds -> inequality rows
    lbf, ubf = lb[free], ub[free]
    nf = int(free.sum())
    I = np.eye(nf)
    has_lb, has_ub = np.isfinite(lbf), np.isfinite(ubf)
    Gall = np.vstack([Gf[gactive], -I[has_lb], I[has_ub]])
    hall = np.concatenate([hf[gactive], -lbf[has_lb], ubf[has_ub]])
    x0 = np.zeros(nf)
    x0[has_lb] = lbf[has_lb] + 1.0
    x0[has_ub] = ubf[has_ub] - 1.0
    both = has_lb & has_ub
    x0[both] = 0.5 * (lbf[both] + ubf[both])

    res = _ipm(Hff, gf, Af[keep], bf[keep], Gall, hall, x0, tol, max_iter)
    if res.status != "optimal" and check_feasibility:
        if not _phase1_feasible(Af[keep], bf[keep], Gall, hall, x0, tol):
            return infeasible("elastic phase 1")
    x = xf.copy()
    x[free] = res.x
    eq = np.zeros(A.shape[0])
    eq[keep] = res.eq_dual
    ineq = np.zeros(G.shape[0])
    ineq[np.flatnonzero(gactive)] = res.ineq_dual[: int(gactive.sum())]
    return QpResult(
        x=x,
        value=float(res.value + const),
        status=res.status,
        eq_dual=eq,
        ineq_dual=ineq,
        iterations=res.iterations,
    )


def _phase1_feasible(A, b, G, h, x0, tol) -> bool:
    """Minimise the total violation of A x = b, G x <= h (elastic form)."""
    n, m, k = x0.size, A.shape[0], G.shape[0]
    # variables: x, e+ (m), e- (m), v (k)
    N = n + 2 * m + k
    c = np.concatenate([np.zeros(n), np.ones(2 * m + k)])
    Ae = np.hstack([A, np.eye(m), -np.eye(m), np.zeros((m, k))])
    Ge = np.vstack([
        np.hstack([G, np.zeros((k, 2 * m)), -np.eye(k)]),
        np.hstack([np.zeros((2 * m + k, n)), -np.eye(2 * m + k)]),
    ])
    he = np.concatenate([h, np.zeros(2 * m + k)])
    start = np.concatenate([x0, np.ones(2 * m + k)])
    res = _ipm(np.zeros((N, N)), c, Ae, b, Ge, he, start, 1e-9, 150)
    scale = 1.0 + float(np.abs(b).sum()) + float(np.abs(h).sum())
    viol = res.value if math.isfinite(res.value) else math.inf
    return viol <= max(1e-6, 10 * tol) * scale


def _ipm(H, g, A, b, G, h, x0, tol, max_iter) -> QpResult:
    n, m, k = g.size, A.shape[0], G.shape[0]
    x = x0.astype(float).copy()
    s = np.maximum(h - G @ x, 1.0)
    z = np.ones(k)
    y = np.zeros(m)
    ng = 1.0 + float(np.linalg.norm(g))
    nb = 1.0 + float(np.linalg.norm(b))
    nh = 1.0 + float(np.linalg.norm(h))
    hscale = 1.0 + float(np.abs(H).max()) if n else 1.0
    status = "max-iter"
    best = None
    it = 0
    for it in range(max_iter + 1):
        Hx = H @ x
        rd = Hx + g + A.T @ y + G.T @ z
        rp = A @ x - b
        ri = G @ x + s - h
        mu = float(s @ z) / k if k else 0.0
        pobj = 0.5 * float(x @ Hx) + float(g @ x)
        dobj = -0.5 * float(x @ Hx) - float(b @ y) - float(h @ z)
        e_d = float(np.linalg.norm(rd)) / ng
        e_p = max(float(np.linalg.norm(rp)) / nb, float(np.linalg.norm(ri)) / nh)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        if not all(map(math.isfinite, (pobj, dobj, e_d, e_p))):
            status = "numerical-failure"
            break
        merit = max(e_d, e_p, gap)
        if best is None or merit < best[0]:
            best = (merit, x.copy(), y.copy(), z.copy(), pobj)
        if e_d <= tol and e_p <= tol and gap <= tol:
            status = "optimal"
            break
        if it == max_iter:
            break
        # multipliers running away signal an infeasible problem
        if float(np.abs(z).max(initial=0.0)) > 1e12 * (1.0 + hscale) or float(np.abs(y).max(initial=0.0)) > 1e12 * (1.0 + hscale):
            status = "numerical-failure"
            break
        D = z / s
        M = H + (G.T * D) @ G
        # tiny regularisation tied to H (not to the barrier terms, which grow
        # without bound near the solution), then one refinement step
        reg = 1e-14 * hscale
        K = np.block([[M, A.T], [A, np.zeros((m, m))]])

        def factor(r):
            Kr = K + np.diag(np.concatenate([np.full(n, r), np.full(m, -r)]))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                return sla.lu_factor(Kr, check_finite=False)

        def solve(rcomp):
            rhs1 = -rd - G.T @ ((rcomp + z * ri) / s)
            rhs = np.concatenate([rhs1, -rp])
            sol = sla.lu_solve(lu, rhs, check_finite=False)
            sol = sol + sla.lu_solve(lu, rhs - K @ sol, check_finite=False)
            dx, dy = sol[:n], sol[n:]
            ds = -ri - G @ dx
            dz = (rcomp - z * ds) / s
            return dx, dy, ds, dz

        try:
            lu = factor(reg)
            if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0])), initial=1.0) == 0.0:
                # singular system: fall back to a stronger shift
                lu = factor(1e-10 * (1.0 + float(np.abs(np.diag(K)).max(initial=0.0))))
        except (ValueError, np.linalg.LinAlgError):
            status = "numerical-failure"
            break

        def max_step(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))) if np.any(neg) else 1.0

        with np.errstate(all="ignore"):
            dx, dy, ds, dz = solve(-s * z)
            ap, ad = max_step(s, ds), max_step(z, dz)
            sigma = 0.0
            if k:
                mu_aff = float((s + ap * ds) @ (z + ad * dz)) / k
                sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
            dx, dy, ds, dz = solve(sigma * mu - s * z - ds * dz)
            ap = 0.99 * max_step(s, ds) if k else 1.0
            ad = 0.99 * max_step(z, dz) if k else 1.0
            ap, ad = min(ap, 1.0), min(ad, 1.0)
        if not all(np.all(np.isfinite(v)) for v in (dx, dy, ds, dz)):
            status = "numerical-failure"
            break
        x = x + ap * dx
        s = s + ap * ds
        y = y + ad * dy
        z = z + ad * dz
    if status != "optimal" and best is not None:
        _, x, y, z, pobj = best
    return QpResult(
        x=x,
        value=float(0.5 * x @ H @ x + g @ x),
        status=status,
        eq_dual=y,
        ineq_dual=z,
        iterations=it,
    )
