"""Dense primal-dual interior-point solver for small conic programs.

Problems have one PSD block Z of order N and L nonnegative scalars s:

    maximize    <C, Z> + c_s's + offset
    subject to  <A_k, Z> + B_k's = b_k      k = 1..K
                Z psd, s >= 0

The dual (in the convention used throughout the package) is

    minimize    b'y + offset
    subject to  sum_k y_k A_k - C = S psd,   B'y - c_s = w >= 0

so the Lagrangian is  <C,Z> + c_s's - sum_k y_k (<A_k,Z> + B_k's - b_k)  and a
row that encodes an inequality "h(Z) <= r" through a +1 slack has y_k >= 0.

The iteration is an infeasible path-following method using Nesterov-Todd
scaling on the PSD block and Mehrotra's predictor-corrector.  Everything is
dense; the intended sizes are N up to a few dozen and K up to a few hundred.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)


class ConicError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tolerances:
    gap: float = 1e-8
    psd: float = 1e-9
    nn: float = 1e-9
    feas: float = 1e-8


@dataclass(frozen=True, eq=False)
class ConicProgram:
    C: np.ndarray
    c_slack: np.ndarray
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    offset: float = 0.0
    labels: tuple[str, ...] = ()
    # dual directions d with sum_k d_k A_k psd, B'd >= 0 and b'd = 0; every
    # feasible point lies on the face they expose (see solve_conic)
    face_certificates: tuple[np.ndarray, ...] = ()
    # presolve data shared between programs that differ only in the objective
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        N = self.C.shape[0]
        K = self.b.shape[0]
        if self.C.shape != (N, N) or not np.allclose(self.C, self.C.T, atol=1e-12):
            raise ConicError("objective matrix must be square and symmetric")
        if self.A.shape != (K, N, N):
            raise ConicError(f"A has shape {self.A.shape}, expected {(K, N, N)}")
        if self.B.shape != (K, self.c_slack.shape[0]):
            raise ConicError(f"B has shape {self.B.shape}, expected {(K, self.c_slack.shape[0])}")
        if K and not np.allclose(self.A, self.A.transpose(0, 2, 1), atol=1e-12):
            raise ConicError("constraint matrices must be symmetric")
        for arr in (self.C, self.c_slack, self.A, self.B, self.b):
            arr.setflags(write=False)

    @property
    def psd_order(self) -> int:
        return self.C.shape[0]

    @property
    def nn_count(self) -> int:
        return self.c_slack.shape[0]

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]

    def with_objective(self, C: np.ndarray, c_slack: np.ndarray | None = None, offset: float = 0.0) -> "ConicProgram":
        return ConicProgram(
            C=np.array(C, dtype=float),
            c_slack=self.c_slack if c_slack is None else np.array(c_slack, dtype=float),
            A=self.A,
            B=self.B,
            b=self.b,
            offset=offset,
            labels=self.labels,
            face_certificates=self.face_certificates,
            _cache=self._cache,
        )

    def scaled(self, t: float) -> "ConicProgram":
        return self.with_objective(t * self.C, t * self.c_slack, t * self.offset)

    def presolve(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices of a maximal independent row subset, and row norms."""
        if "rows" not in self._cache:
            self._cache["rows"] = _independent_rows(self.A, self.B, self.b, quiet=self._cache.get("quiet", False))
        return self._cache["rows"]


def _svec_rows(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    K, N, _ = A.shape
    iu = np.triu_indices(N)
    w = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    return np.hstack([A[:, iu[0], iu[1]] * w, B])


def _independent_rows(A: np.ndarray, B: np.ndarray, b: np.ndarray, quiet: bool = False) -> tuple[np.ndarray, np.ndarray]:
    K = b.shape[0]
    if K == 0:
        return np.arange(0), np.ones(0)
    M = _svec_rows(A, B)
    norms = np.linalg.norm(M, axis=1)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0)
        if np.any(np.abs(b[bad]) > 1e-12):
            raise ConicError(f"empty constraint row with nonzero right-hand side: rows {bad.tolist()}")
    safe = np.where(norms > 0, norms, 1.0)
    Mn = M / safe[:, None]
    _, R, piv = sla.qr(Mn.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * max(diag[0], 1.0))) if diag.size else 0
    keep = np.sort(piv[:rank])
    if rank < K:
        dropped = np.setdiff1d(np.arange(K), keep)
        # dropped rows must be consistent combinations of the kept ones
        coef, *_ = np.linalg.lstsq(Mn[keep].T, Mn[dropped].T, rcond=None)
        bn = b / safe
        mismatch = np.abs(coef.T @ bn[keep] - bn[dropped])
        if np.any(mismatch > 1e-8 * (1 + np.abs(bn[dropped]))):
            raise ConicError("linearly dependent equality rows are inconsistent")
        (log.debug if quiet else log.warning)("dropping %d linearly dependent equality row(s): %s", dropped.size, dropped.tolist())
    return keep, safe[keep]


@dataclass
class ConicSolution:
    Z: np.ndarray
    s: np.ndarray
    dual: np.ndarray
    S: np.ndarray
    w: np.ndarray
    obj_primal: float
    obj_dual: float
    status: str
    iterations: int
    history: list[dict] = field(default_factory=list, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.Z[0, 1:]

    @property
    def X(self) -> np.ndarray:
        return self.Z[1:, 1:]


@dataclass(frozen=True)
class KktReport:
    primal_residual: float
    dual_residual: float
    gap: float
    complementarity: float
    lambda_min_Z: float
    min_slack: float


def check_kkt(prog: ConicProgram, sol: ConicSolution) -> KktReport:
    """Residuals of a candidate primal-dual pair, measured on the original data.

    The dual slacks are recomputed from the multipliers, so the dual residual
    is the amount by which sum y_k A_k - C fails to be psd (and B'y - c_s fails
    to be nonnegative), relative to 1 + ||C||.
    """
    Z = np.asarray(sol.Z, dtype=float)
    s = np.asarray(sol.s, dtype=float)
    y = np.asarray(sol.dual, dtype=float)
    K = prog.n_rows
    if K:
        ax = np.einsum("kij,ij->k", prog.A, Z) + prog.B @ s
        primal = float(np.linalg.norm(ax - prog.b)) / (1.0 + float(np.linalg.norm(prog.b)))
        S = np.einsum("k,kij->ij", y, prog.A) - prog.C
        w = prog.B.T @ y - prog.c_slack
    else:
        primal = 0.0
        S = -np.array(prog.C)
        w = -np.array(prog.c_slack)
    S = (S + S.T) / 2
    scale = 1.0 + float(np.linalg.norm(prog.C)) + float(np.linalg.norm(prog.c_slack))
    dual_viol = max(0.0, -float(np.linalg.eigvalsh(S)[0]))
    if w.size:
        dual_viol = max(dual_viol, -float(w.min()))
    pobj = float(np.sum(prog.C * Z) + prog.c_slack @ s + prog.offset)
    dobj = float(prog.b @ y + prog.offset) if K else prog.offset
    compl = float(np.sum(S * Z) + (w @ s if w.size else 0.0))
    return KktReport(
        primal_residual=primal,
        dual_residual=dual_viol / scale,
        gap=abs(pobj - dobj) / (1.0 + abs(pobj)),
        complementarity=abs(compl) / (1.0 + abs(pobj)),
        lambda_min_Z=float(np.linalg.eigvalsh((Z + Z.T) / 2)[0]),
        min_slack=float(s.min()) if s.size else 0.0,
    )


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) * 0.5


def _max_step_psd(X: np.ndarray, dX: np.ndarray) -> float:
    L = np.linalg.cholesky(X)
    T = sla.solve_triangular(L, dX, lower=True)
    T = sla.solve_triangular(L, T.T, lower=True)
    lmin = float(np.linalg.eigvalsh(_sym(T))[0])
    return math.inf if lmin >= 0 else -1.0 / lmin


def _max_step_lp(s: np.ndarray, ds: np.ndarray) -> float:
    neg = ds < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-s[neg] / ds[neg]))


def solve_conic(
    prog: ConicProgram,
    tol: Tolerances = Tolerances(),
    max_iter: int = 100,
    start_scale: float = 1.0,
    step_fraction: float = 0.98,
    restart: bool = True,
) -> ConicSolution:
    """Solve ``prog`` to the requested tolerances.

    When the program carries face certificates the iteration runs on the
    reduced program Z = P Zr P' (and with the certified-zero slacks removed),
    which restores a strictly feasible primal.  The dual is lifted back by
    moving along the certificates just far enough to make S psd and w >= 0;
    this leaves b'y unchanged.

    If the first attempt ends without convergence, up to six restarts with
    a rescaled starting point or a shorter step are made and the best result
    is returned.
    """
    if prog.face_certificates:
        return _solve_on_face(prog, tol, max_iter, start_scale, step_fraction, restart)
    return _solve_direct(prog, tol, max_iter, start_scale, step_fraction, restart)


# (start scale multiplier, step fraction) tried in turn after a failed solve
_RESTARTS = ((100.0, None), (0.1, None), (1.0, 0.9), (0.1, 0.9), (1.0, 0.8), (100.0, 0.8))


def _solve_direct(prog, tol, max_iter, start_scale, step_fraction, restart) -> ConicSolution:
    sol = _ipm(prog, tol, max_iter, start_scale, step_fraction)
    if not restart:
        return sol
    total = sol.iterations
    for mult, frac in _RESTARTS:
        if sol.status == "optimal":
            break
        log.info("conic solve ended with status %s; restarting from a shifted start", sol.status)
        retry = _ipm(prog, tol, max_iter, start_scale * mult, frac or step_fraction)
        total += retry.iterations
        if retry.status == "optimal" or _merit(retry) < _merit(sol):
            sol = retry
    sol.iterations = total
    return sol


def _merit(sol: ConicSolution) -> float:
    h = sol.history[-1] if sol.history else {}
    return max(h.get("primal_infeas", math.inf), h.get("dual_infeas", math.inf), h.get("gap", math.inf))


def near_optimal(sol: ConicSolution, tol: Tolerances = Tolerances(), factor: float = 10.0) -> bool:
    """Whether the returned iterate meets ``factor`` times the requested tolerances."""
    return _merit(sol) <= factor * max(tol.feas, tol.gap)


def _face(prog: ConicProgram):
    """Face basis P, mask of free slacks and the reduced program template."""
    if "face" in prog._cache:
        return prog._cache["face"]
    N, L = prog.psd_order, prog.nn_count
    P = np.eye(N)
    free = np.ones(L, dtype=bool)
    for d in prog.face_certificates:
        d = np.asarray(d, dtype=float)
        F = _sym(np.einsum("k,kij->ij", d, prog.A))
        g = prog.B.T @ d
        scale = 1.0 + float(np.abs(d).max())
        if abs(float(prog.b @ d)) > 1e-9 * scale or (g.size and g.min() < -1e-12 * scale):
            raise ConicError("face certificate does not satisfy b'd = 0 and B'd >= 0")
        ev, Q = np.linalg.eigh(_sym(P.T @ F @ P))
        top = max(float(np.abs(ev).max()) if ev.size else 0.0, 1e-300)
        if ev.size and ev[0] < -1e-9 * top:
            raise ConicError("face certificate is not positive semidefinite on the current face")
        P = P @ Q[:, ev <= 1e-9 * top]
        free &= ~(g > 1e-12 * scale)
    Ar = np.einsum("ia,kij,jb->kab", P, prog.A, P)
    template = ConicProgram(
        C=_sym(P.T @ prog.C @ P),
        c_slack=np.array(prog.c_slack[free]),
        A=_sym_stack(Ar),
        B=np.array(prog.B[:, free]),
        b=np.array(prog.b),
        labels=prog.labels,
    )
    # rows that only become dependent on the face are expected; report just
    # the ones already dependent in the original data
    template._cache["quiet"] = True
    prog.presolve()
    prog._cache["face"] = (P, free, template)
    return prog._cache["face"]


def _sym_stack(A: np.ndarray) -> np.ndarray:
    return (A + A.transpose(0, 2, 1)) * 0.5


def _solve_on_face(prog, tol, max_iter, start_scale, step_fraction, restart) -> ConicSolution:
    P, free, template = _face(prog)
    red = template.with_objective(_sym(P.T @ prog.C @ P), prog.c_slack[free], prog.offset)
    rs = _solve_direct(red, tol, max_iter, start_scale, step_fraction, restart)
    Z = _sym(P @ rs.Z @ P.T)
    s = np.zeros(prog.nn_count)
    s[free] = rs.s
    y = np.array(rs.dual, dtype=float)
    scale = 1.0 + float(np.linalg.norm(prog.C)) + float(np.linalg.norm(prog.c_slack))
    y = _lift_dual(prog, y, P, free, 0.5 * tol.feas * scale)
    S = _sym(np.einsum("k,kij->ij", y, prog.A) - prog.C)
    w = prog.B.T @ y - prog.c_slack
    return ConicSolution(
        Z=Z,
        s=s,
        dual=y,
        S=S,
        w=w,
        obj_primal=float(np.sum(prog.C * Z) + prog.c_slack @ s + prog.offset),
        obj_dual=float(prog.b @ y + prog.offset),
        status=rs.status,
        iterations=rs.iterations,
        history=rs.history,
    )


def _free_directions(prog: ConicProgram, P: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Basis (columns) of dual moves that leave the reduced program untouched.

    These are the d with P' A*(d) P = 0, B_free'd = 0 and b'd = 0; adding one
    to y changes neither the reduced dual slack nor the dual objective.
    """
    if "free_dirs" not in prog._cache:
        Ar = np.einsum("ia,kij,jb->kab", P, prog.A, P)
        M = np.hstack([_svec_rows(_sym_stack(Ar), prog.B[:, free]), prog.b[:, None]])
        norms = np.linalg.norm(M, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        D = sla.null_space((M / safe[:, None]).T, rcond=1e-9)
        prog._cache["free_dirs"] = D / safe[:, None]
    return prog._cache["free_dirs"]


def _lift_dual(prog: ConicProgram, y: np.ndarray, P: np.ndarray, free: np.ndarray, eps: float) -> np.ndarray:
    """Complete a face-optimal y to a dual point of the full program.

    An exact completion (S psd) need not exist: when the face optimum has
    rank above one the full dual optimum is typically approached only as the
    certificate multipliers diverge.  We therefore target S >= -eps I:

    1. move along the free directions to minimise the face/complement
       coupling of S, weighted by (S_PP + eps I)^(-1/2) (least squares);
    2. move along each certificate just far enough to make the Schur
       complement on the complement psd, and the certified slacks' w >= 0.
    """
    D = _free_directions(prog, P, free)
    if D.shape[1] == 0:
        return y
    N = prog.psd_order
    R = sla.null_space(P.T) if P.shape[1] < N else np.zeros((N, 0))
    if R.shape[1]:
        S0 = _sym(np.einsum("k,kij->ij", y, prog.A) - prog.C)
        F = _sym_stack(np.einsum("kq,kij->qij", D, prog.A))
        es, Us = np.linalg.eigh(_sym(P.T @ S0 @ P))
        Wh = (Us / np.sqrt(np.maximum(es, 0.0) + eps)) @ Us.T
        rhs = -(Wh @ P.T @ S0 @ R).ravel()
        cols = np.stack([(Wh @ P.T @ Fj @ R).ravel() for Fj in F], axis=1)
        g, *_ = np.linalg.lstsq(cols, rhs, rcond=1e-12)
        y = y + D @ g
    for d in prog.face_certificates:
        d = np.asarray(d, dtype=float)
        Fd = _sym(np.einsum("k,kij->ij", d, prog.A))
        gd = prog.B.T @ d
        t = -math.inf
        if np.abs(Fd).max() > 0:
            S0 = _sym(np.einsum("k,kij->ij", y, prog.A) - prog.C)
            ev, Q = np.linalg.eigh(Fd)
            pos = ev > 1e-9 * float(ev.max())
            Rd, Pd = Q[:, pos], Q[:, ~pos]
            es, Us = np.linalg.eigh(_sym(Pd.T @ S0 @ Pd))
            T = Us.T @ (Pd.T @ S0 @ Rd)
            schur = _sym(T.T @ (T / (np.maximum(es, 0.0) + eps)[:, None]) - Rd.T @ S0 @ Rd - eps * np.eye(Rd.shape[1]))
            gi = 1.0 / np.sqrt(ev[pos])
            t = float(np.linalg.eigvalsh(_sym(schur * gi[:, None] * gi[None, :]))[-1])
        if gd.size and np.any(gd > 0):
            w0 = prog.B.T @ y - prog.c_slack
            mask = gd > 0
            t = max(t, float(np.max(-w0[mask] / gd[mask])))
        if math.isfinite(t):
            y = y + t * d
    return y


def _ipm(prog: ConicProgram, tol: Tolerances, max_iter: int, start_scale: float, step_fraction: float) -> ConicSolution:
    N, L = prog.psd_order, prog.nn_count
    keep, rnorm = prog.presolve()
    K = keep.size
    A = prog.A[keep] / rnorm[:, None, None]
    B = prog.B[keep] / rnorm[:, None]
    b = prog.b[keep] / rnorm
    Avec = A.reshape(K, N * N)
    Cm = -np.asarray(prog.C, dtype=float)
    cm = -np.asarray(prog.c_slack, dtype=float)
    nb = float(np.linalg.norm(b))
    nc = math.hypot(float(np.linalg.norm(Cm)), float(np.linalg.norm(cm)))

    def aop(X, s):
        return Avec @ X.ravel() + B @ s

    def aadj(y):
        return (y @ Avec).reshape(N, N)

    bmax = float(np.max(np.abs(b))) if K else 0.0
    xi = start_scale * max(10.0, math.sqrt(N), N * (1.0 + bmax) / 2.0)
    eta = start_scale * max(10.0, math.sqrt(N), 1.0 + nc)
    X = xi * np.eye(N)
    S = eta * np.eye(N)
    s = xi * np.ones(L)
    w = eta * np.ones(L)
    y = np.zeros(K)
    history: list[dict] = []
    status = "max-iter"
    best = None
    it = 0

    for it in range(max_iter + 1):
        rp = b - aop(X, s)
        Rd = Cm - aadj(y) - S
        rw = cm - B.T @ y - w
        pobj = float(np.sum(Cm * X) + cm @ s)
        dobj = float(b @ y)
        mu = (float(np.sum(X * S)) + float(s @ w)) / (N + L)
        pinf = float(np.linalg.norm(rp)) / (1.0 + nb)
        dinf = math.hypot(float(np.linalg.norm(Rd)), float(np.linalg.norm(rw))) / (1.0 + nc)
        # measured against the reported objective, offset included
        ref = 1.0 + abs(prog.offset - pobj)
        relgap = abs(pobj - dobj) / ref
        compl = mu * (N + L) / ref
        if not all(map(math.isfinite, (pobj, dobj, mu, pinf, dinf))):
            status = "numerical-failure"
            break
        history.append(
            {"iteration": it, "obj_primal": -pobj + prog.offset, "obj_dual": -dobj + prog.offset,
             "primal_infeas": pinf, "dual_infeas": dinf, "gap": relgap, "mu": mu}
        )
        # safety margins so that residuals recomputed from (Z, y) alone, as
        # check_kkt does, also meet the tolerances; the tight feasibility
        # target is not always reachable, the loose one is then accepted
        acceptable = pinf <= 0.5 * tol.feas and dinf <= 0.5 * tol.feas and relgap <= 0.5 * tol.gap and compl <= 0.5 * tol.gap
        merit = max(pinf, dinf, relgap, compl)
        if best is None or (acceptable, -merit) > (best[0], -best[1]):
            best = (acceptable, merit, X, s, y, S, w, it)
        if acceptable and pinf <= 0.1 * tol.feas and dinf <= 0.1 * tol.feas:
            status = "optimal"
            break
        if it == max_iter:
            break
        try:
            # Nesterov-Todd scaling W = G G' from Cholesky factors; the
            # scaled point V = G^-1 X G^-T = G' S G is diagonal
            Lx = np.linalg.cholesky(X)
            Ls = np.linalg.cholesky(S)
            Uq, v, Vt = np.linalg.svd(Ls.T @ Lx)
            rv = np.sqrt(v)
            G = (Lx @ Vt.T) / rv
            Gi = (rv[:, None] * Vt) @ sla.solve_triangular(Lx, np.eye(N), lower=True)
            W = G @ G.T
            D = s / w
            WAW = np.matmul(W, np.matmul(A, W)).reshape(K, N * N)
            M = _sym(Avec @ WAW.T + (B * D) @ B.T)
            try:
                fac = sla.cho_factor(M, lower=True, check_finite=True)
                msolve = lambda r: sla.cho_solve(fac, r)
            except np.linalg.LinAlgError:
                lu = sla.lu_factor(M + 1e-14 * np.trace(M) / max(K, 1) * np.eye(K))
                msolve = lambda r: sla.lu_solve(lu, r)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("factorization failed at iteration %d: %s", it, exc)
            status = "numerical-failure"
            break

        WRdW = W @ Rd @ W

        def direction(Rx, Rs):
            rhs = rp - aop(Rx - WRdW, Rs - D * rw)
            dy = msolve(rhs) if K else np.zeros(0)
            dS = _sym(Rd - aadj(dy))
            dw = rw - B.T @ dy
            dX = _sym(Rx - W @ dS @ W)
            ds = Rs - D * dw
            return dX, ds, dy, dS, dw

        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                dX, ds, dy, dS, dw = direction(-X, -s)
                ap = min(1.0, _max_step_psd(X, dX), _max_step_lp(s, ds))
                ad = min(1.0, _max_step_psd(S, dS), _max_step_lp(w, dw))
                mu_aff = (float(np.sum((X + ap * dX) * (S + ad * dS))) + float((s + ap * ds) @ (w + ad * dw))) / (N + L)
                sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))
                dXt = Gi @ dX @ Gi.T
                dSt = G.T @ dS @ G
                rhs = 2.0 * sigma * mu * np.eye(N) - 2.0 * np.diag(v * v) - (dXt @ dSt + dSt @ dXt)
                U = rhs / (v[:, None] + v[None, :])
                Rx = _sym(G @ U @ G.T)
                Rs = (sigma * mu - s * w - ds * dw) / w
                dX, ds, dy, dS, dw = direction(Rx, Rs)
                ap = min(1.0, step_fraction * min(_max_step_psd(X, dX), _max_step_lp(s, ds)))
                ad = min(1.0, step_fraction * min(_max_step_psd(S, dS), _max_step_lp(w, dw)))
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            log.debug("step computation failed at iteration %d: %s", it, exc)
            status = "numerical-failure"
            break
        history[-1].update(step_primal=ap, step_dual=ad, sigma=sigma)
        X = _sym(X + ap * dX)
        s = s + ap * ds
        y = y + ad * dy
        S = _sym(S + ad * dS)
        w = w + ad * dw

    if status != "optimal" and best is not None:
        ok, _, X, s, y, S, w, _ = best
        if ok:
            status = "optimal"
    dual = np.zeros(prog.n_rows)
    dual[keep] = -y / rnorm
    return ConicSolution(
        Z=X,
        s=s,
        dual=dual,
        S=S,
        w=w,
        obj_primal=-float(np.sum(Cm * X) + cm @ s) + prog.offset,
        obj_dual=-float(b @ y) + prog.offset,
        status=status,
        iterations=it,
        history=history,
    )


def write_iterate_log(sol: ConicSolution, path: str | Path) -> None:
    fields = ["iteration", "obj_primal", "obj_dual", "primal_infeas", "dual_infeas", "gap", "mu",
              "step_primal", "step_dual", "sigma"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in sol.history:
            writer.writerow(row)
