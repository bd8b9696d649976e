"""Dense convex QP solver used for every local and centralized subproblem.

Solves::

    minimize    0.5 z'Hz + g'z
    subject to  G z <= h,   lower <= z <= upper

with ``H`` symmetric positive semidefinite.  The core is a Mehrotra
predictor-corrector interior point method; its result is polished by solving
the KKT system on the identified active set.  A warm start supplies a
candidate active set: if the KKT conditions hold on it the interior point
phase is skipped entirely, which is the common case inside ADMM loops where
only the linear term changes between calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy.optimize import linprog

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 4000

OPTIMAL = "optimal"
MAX_ITER = "max-iterations"
INFEASIBLE = "infeasible"


class QpError(RuntimeError):
    pass


@dataclass(eq=False)
class QpInstance:
    H: np.ndarray
    g: np.ndarray
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        n = self.g.size
        self.H = np.asarray(self.H, dtype=float).reshape(n, n)
        if self.G is None:
            self.G = np.zeros((0, n))
            self.h = np.zeros(0)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if self.h.size != self.G.shape[0]:
            raise ValueError("G and h row counts differ")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(n)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(n)

    @property
    def n(self) -> int:
        return self.g.size

    def objective(self, z) -> float:
        return float(0.5 * z @ self.H @ z + self.g @ z)

    def validate(self) -> None:
        if not np.allclose(self.H, self.H.T, atol=1e-10 * max(1.0, np.abs(self.H).max(initial=0.0))):
            raise ValueError("H must be symmetric")
        if self.n:
            lam_min = np.linalg.eigvalsh(0.5 * (self.H + self.H.T))[0]
            if lam_min < -1e-10 * max(1.0, np.abs(self.H).max()):
                raise ValueError(f"H must be positive semidefinite (smallest eigenvalue {lam_min:.3g})")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")


@dataclass(eq=False)
class QpSolution:
    z: np.ndarray
    ineq_duals: np.ndarray
    lower_duals: np.ndarray
    upper_duals: np.ndarray
    status: str
    kkt_residual: float
    iterations: int
    # boolean mask over the stacked rows [G; upper bounds; lower bounds], used for warm starts
    active: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Stacked:
    """All inequality rows as ``C z <= d`` (general rows, finite upper, finite lower)."""

    def __init__(self, inst: QpInstance):
        n = inst.n
        self.up_idx = np.flatnonzero(np.isfinite(inst.upper))
        self.lo_idx = np.flatnonzero(np.isfinite(inst.lower))
        eye = np.eye(n)
        self.C = np.vstack([inst.G, eye[self.up_idx], -eye[self.lo_idx]])
        self.d = np.concatenate([inst.h, inst.upper[self.up_idx], -inst.lower[self.lo_idx]])
        self.m_general = inst.G.shape[0]

    def unpack(self, lam: np.ndarray, n: int):
        mg, mu = self.m_general, self.up_idx.size
        upper = np.zeros(n)
        lower = np.zeros(n)
        upper[self.up_idx] = lam[mg:mg + mu]
        lower[self.lo_idx] = lam[mg + mu:]
        return lam[:mg].copy(), lower, upper


def _kkt_residual(H, g, C, d, z, lam) -> float:
    stat = H @ z + g + C.T @ lam
    slack = d - C @ z
    parts = [np.abs(stat).max(initial=0.0),
             np.maximum(0.0, -slack).max(initial=0.0),
             np.maximum(0.0, -lam).max(initial=0.0),
             np.abs(lam * slack).max(initial=0.0)]
    return float(max(parts))


def _solve_on_active(H, g, C, d, active):
    """Equality-constrained solve treating ``active`` rows as equalities."""
    n = g.size
    A = C[active]
    k = A.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-g, d[active]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)):
        return None, None
    lam = np.zeros(C.shape[0])
    lam[active] = sol[n:]
    return sol[:n], lam


def _polish(H, g, C, d, active, tol, rounds=10):
    """Equality solves on ``active``, then a few primal-dual active-set fixes.

    Degenerate rows (zero multiplier and zero slack) can land on the wrong
    side of the interior point's ``lam > w`` split; each fix drops rows with
    negative multipliers and adds violated rows.
    """
    best = (None, None, np.inf, active)
    seen = set()
    for _ in range(rounds):
        key = active.tobytes()
        if key in seen:
            break
        seen.add(key)
        z, lam = _solve_on_active(H, g, C, d, active)
        if z is None:
            break
        res = _kkt_residual(H, g, C, d, z, lam)
        if res < best[2]:
            best = (z, lam, res, active.copy())
        if res <= tol:
            break
        slack = d - C @ z
        active = (active & (lam >= 0.0)) | (slack < -0.5 * tol)
    return best


@numba.njit(cache=True)
def _max_step(v, dv):
    a = 1.0
    for k in range(v.size):
        if dv[k] < 0.0:
            r = -v[k] / dv[k]
            if r < a:
                a = r
    return a


@numba.njit(cache=True)
def _cholesky(K):
    """Lower Cholesky factor; ``ok`` is False on a nonpositive pivot."""
    n = K.shape[0]
    L = np.zeros_like(K)
    for j in range(n):
        s = K[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return L, False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            t = K[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    return L, True


@numba.njit(cache=True)
def _triangular_solves(L, r):
    n = r.size
    y = np.empty(n)
    for i in range(n):
        t = r[i]
        for k in range(i):
            t -= L[i, k] * y[k]
        y[i] = t / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        t = y[i]
        for k in range(i + 1, n):
            t -= L[k, i] * x[k]
        x[i] = t / L[i, i]
    return x


@numba.njit(cache=True)
def _direction(L, C, r_d, r_p, w, lam, r_c):
    # r_c is the right-hand side of the complementarity block
    rhs = -r_d - C.T @ ((r_c + lam * r_p) / w)
    dz = _triangular_solves(L, rhs)
    dw = -r_p - C @ dz
    dlam = (r_c - lam * dw) / w
    return dz, dw, dlam


@numba.njit(cache=True)
def _interior_point(H, g, C, d, tol, max_iter, z0):
    """Mehrotra predictor-corrector on ``C z + w = d, w >= 0, lam >= 0``.

    Returns ``(z, lam, w, iterations, diverged)``.
    """
    n, m = g.size, d.size
    z = z0.copy()
    w = np.maximum(d - C @ z, 1.0)
    lam = np.ones(m)
    scale = max(1.0, np.abs(g).max() if n else 0.0, np.abs(d).max())
    reg = 1e-13 * max(1.0, np.abs(H).max() if n else 0.0)
    it = 0
    for it in range(1, max_iter + 1):
        r_d = H @ z + g + C.T @ lam
        r_p = C @ z + w - d
        mu = (w @ lam) / m
        # the active-set polish takes the iterate the rest of the way
        if np.abs(r_d).max() <= tol and np.abs(r_p).max() <= tol and mu <= 1e-1 * tol:
            return z, lam, w, it, False
        if np.abs(lam).max() > 1e12 * scale or np.abs(z).max() > 1e12 * scale:
            return z, lam, w, it, True
        D = lam / w
        K = H + (C.T * D) @ C
        for k in range(n):
            K[k, k] += reg
        L, ok = _cholesky(K)
        if not ok:
            # scaling too extreme to continue; hand the iterate to the polish step
            return z, lam, w, it, False
        # affine predictor
        dz_a, dw_a, dl_a = _direction(L, C, r_d, r_p, w, lam, -w * lam)
        a_p = _max_step(w, dw_a)
        a_d = _max_step(lam, dl_a)
        mu_aff = ((w + a_p * dw_a) @ (lam + a_d * dl_a)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # combined corrector
        dz, dw, dl = _direction(L, C, r_d, r_p, w, lam, -w * lam - dw_a * dl_a + sigma * mu)
        alpha = min(1.0, 0.995 * _max_step(w, dw), 0.995 * _max_step(lam, dl))
        z = z + alpha * dz
        w = np.maximum(w + alpha * dw, 1e-300)
        lam = np.maximum(lam + alpha * dl, 1e-300)
    return z, lam, w, it, False


def _infeasible(C, d, n) -> bool:
    if C.shape[0] == 0:
        return False
    res = linprog(np.zeros(n), A_ub=C, b_ub=d, bounds=[(None, None)] * n, method="highs")
    return res.status == 2


def solve_qp(instance: QpInstance, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
             warm: Optional[QpSolution] = None, validate: bool = True) -> QpSolution:
    """Solve a convex QP.

    Parameters
    ----------
    instance : QpInstance
        Problem data.  ``H`` must be positive semidefinite.
    tol : float
        Bound on every KKT residual (stationarity, primal and dual
        feasibility, complementarity) for an ``optimal`` status.
    max_iter : int
        Interior point iteration cap.
    warm : QpSolution, optional
        Previous solution of a QP with the same constraint structure.  Its
        active set is tried first.

    Returns
    -------
    QpSolution
        ``status`` is ``optimal``, ``max-iterations`` or ``infeasible``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if validate:
        instance.validate()
    n = instance.n
    st = _Stacked(instance)
    H, g, C, d = instance.H, instance.g, st.C, st.d
    m = d.size

    def finish(z, lam, status, iters, active):
        res = _kkt_residual(H, g, C, d, z, lam)
        if status == OPTIMAL and res > tol:
            status = MAX_ITER
        ineq, lower, upper = st.unpack(lam, n)
        return QpSolution(z, ineq, lower, upper, status, res, iters, active)

    if m == 0:
        try:
            z = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            z = np.linalg.lstsq(H, -g, rcond=None)[0]
        return finish(z, np.zeros(0), OPTIMAL, 1, np.zeros(0, dtype=bool))

    if warm is not None and warm.active is not None and warm.active.shape == (m,):
        z, lam = _solve_on_active(H, g, C, d, warm.active)
        if z is not None and _kkt_residual(H, g, C, d, z, lam) <= tol:
            return finish(z, lam, OPTIMAL, 0, warm.active.copy())

    z0 = warm.z if warm is not None and warm.z.shape == (n,) else np.zeros(n)
    z, lam, w, iters, diverged = _interior_point(np.ascontiguousarray(H), g, np.ascontiguousarray(C), d,
                                                 float(tol), int(max_iter), np.asarray(z0, dtype=float))
    best_z, best_lam = z, lam
    best_res = _kkt_residual(H, g, C, d, z, lam)
    active = lam > w
    pz, plam, pres, pactive = _polish(H, g, C, d, active, tol)
    if pres <= best_res:
        best_z, best_lam, best_res, active = pz, plam, pres, pactive
    if best_res <= tol:
        return finish(best_z, best_lam, OPTIMAL, iters, active)
    if diverged or iters >= max_iter:
        if _infeasible(C, d, n):
            return finish(best_z, best_lam, INFEASIBLE, iters, active)
    return finish(best_z, best_lam, MAX_ITER, iters, active)
