"""Softplus (two-term LogSumExp) smoothing of the violation penalty.

``max{0, z}`` is replaced by ``log(1 + e^{c z}) / c``, which is smooth,
convex, lies above ``max{0, z}`` and exceeds it by at most ``log(2) / c``.
Smoothed problems are no longer QPs, so this module carries its own solver:
a projected Newton method with Armijo backtracking for box domains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.special import expit

from .local import NeighborSnapshot, ProxParams, LocalSubproblem
from .problem import AgentSpec, CoupledProblem, LocalBlock, LocalConstraintView, QuadraticObjective

DEFAULT_C = 10.0
CONTINUATION_C = 100.0


class SmoothingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SmoothingConfig:
    c: float = DEFAULT_C

    def __post_init__(self):
        if not self.c > 0 or not math.isfinite(self.c):
            raise ValueError("smoothing parameter c must be positive and finite")


def softplus_penalty(z: np.ndarray, weights: np.ndarray, beta: float, c: float) -> Tuple[float, np.ndarray]:
    """``(beta/c) w' log(1 + e^{c z})`` and its derivative with respect to ``z``."""
    z = np.asarray(z, dtype=float)
    value = beta / c * float(weights @ np.logaddexp(0.0, c * z))
    return value, beta * weights * expit(c * z)


def softplus_curvature(z: np.ndarray, weights: np.ndarray, beta: float, c: float) -> np.ndarray:
    """Second derivative of :func:`softplus_penalty` per row (diagonal)."""
    s = expit(c * np.asarray(z, dtype=float))
    return beta * c * weights * s * (1.0 - s)


def smoothed_penalty(view: LocalConstraintView, block: LocalBlock, cfg: SmoothingConfig) -> Tuple[float, np.ndarray]:
    """Smoothed local penalty and its gradient over the flattened block."""
    block.check_layout(view)
    flat = block.flat()
    value, dz = softplus_penalty(view.rows @ flat - view.rhs, view.weights, view.beta, cfg.c)
    return value, view.rows.T @ dz


def smoothed_total_penalty(problem: CoupledProblem, x, cfg: SmoothingConfig) -> Tuple[float, np.ndarray]:
    A, b = problem.stacked()
    x = np.asarray(x, dtype=float)
    value, dz = softplus_penalty(A @ x - b, np.ones(b.size), problem.beta, cfg.c)
    return value, A.T @ dz


def eval_smoothed_total(problem: CoupledProblem, x, cfg: SmoothingConfig) -> float:
    parts = problem.split(x)
    return sum(a.objective(parts[a.id]) for a in problem.agents) + smoothed_total_penalty(problem, x, cfg)[0]


def smoothing_gap_bound(weights: np.ndarray, beta: float, c: float) -> float:
    """Largest possible excess of the smoothed penalty over the exact one."""
    return beta * float(np.sum(weights)) * math.log(2.0) / c


@dataclass(eq=False)
class SmoothedSolution:
    z: np.ndarray
    objective: float
    # infinity norm of z - proj(z - grad), zero exactly at the minimizer
    stationarity: float
    iterations: int


def minimize_smoothed(H: np.ndarray, g: np.ndarray, rows: np.ndarray, rhs: np.ndarray, weights: np.ndarray,
                      beta: float, c: float, lower: Optional[np.ndarray] = None, upper: Optional[np.ndarray] = None,
                      tol: float = 1e-9, max_iter: int = 500, z0: Optional[np.ndarray] = None) -> SmoothedSolution:
    """Minimize ``0.5 z'Hz + g'z + (beta/c) w' log(1 + e^{c(Rz - r)})`` over a box.

    Projected Newton: bounds that are tight with the gradient pointing
    outwards are frozen, a Newton step is taken in the remaining variables
    and the projected path is searched with Armijo backtracking.  ``H`` must
    be positive definite.  Without ``z0`` and for sharp penalties
    (``c > CONTINUATION_C``) the start point comes from the same problem at
    ``c / 10``, since Newton steps from far away overshoot the nearly kinked rows.
    """
    n = g.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if z0 is None and c > CONTINUATION_C and rows.shape[0]:
        z0 = minimize_smoothed(H, g, rows, rhs, weights, beta, c / 10.0, lower, upper, tol, max_iter).z

    def fun(z):
        v, dz = softplus_penalty(rows @ z - rhs, weights, beta, c)
        return 0.5 * z @ H @ z + g @ z + v, H @ z + g + rows.T @ dz

    z = np.clip(np.zeros(n) if z0 is None else np.asarray(z0, dtype=float), lower, upper)
    f, grad = fun(z)
    scale = max(1.0, float(np.abs(g).max(initial=0.0)), beta * float(np.abs(rows).sum(axis=0).max(initial=0.0)))
    for it in range(max_iter + 1):
        proj_grad = z - np.clip(z - grad, lower, upper)
        stat = float(np.abs(proj_grad).max(initial=0.0))
        if stat <= tol * scale:
            return SmoothedSolution(z, float(f), stat, it)
        if it == max_iter:
            break
        eps = min(1e-8 * scale, stat)
        frozen = ((z <= lower + eps) & (grad > 0)) | ((z >= upper - eps) & (grad < 0))
        free = ~frozen
        d = np.zeros(n)
        if free.any():
            curv = softplus_curvature(rows @ z - rhs, weights, beta, c)
            K = H + (rows.T * curv) @ rows
            d[free] = -scipy.linalg.solve(K[np.ix_(free, free)], grad[free], assume_a="pos")
        d[frozen] = -grad[frozen]
        step = 1.0
        while True:
            z_new = np.clip(z + step * d, lower, upper)
            f_new, g_new = fun(z_new)
            if f_new <= f + 1e-4 * grad @ (z_new - z):
                break
            step *= 0.5
            if step < 1e-14:
                # no representable decrease left: accept if already at working precision
                if stat <= 1e3 * tol * scale:
                    return SmoothedSolution(z, float(f), stat, it)
                raise SmoothingError(f"line search failed (projected gradient {stat:.3e})")
        stalled = np.abs(z_new - z).max(initial=0.0) <= 1e-14 * (1.0 + np.abs(z).max(initial=0.0))
        z, f, grad = z_new, f_new, g_new
        if stalled and stat <= 1e3 * tol * scale:
            # rounding floor reached
            return SmoothedSolution(z, float(f), stat, it + 1)
    raise SmoothingError(f"no convergence in {max_iter} Newton steps (projected gradient {stat:.3e})")


def _reject_hard(spec: AgentSpec) -> None:
    if spec.local_hard_constraints:
        raise ValueError(f"agent {spec.id!r}: smoothed solves support box domains only, not hard rows")


def solve_smoothed(spec: AgentSpec, view: LocalConstraintView, cfg: SmoothingConfig,
                   params: Optional[ProxParams] = None, block_k: Optional[LocalBlock] = None,
                   snapshot: Optional[NeighborSnapshot] = None, with_prox: bool = False,
                   tol: float = 1e-9) -> LocalBlock:
    """Local update with the smoothed penalty in place of the exact one.

    The augmented consensus terms are the same as in the QP update and
    need ``params`` and ``snapshot``; they may be omitted only for an agent
    without neighbors, in which case the result minimizes ``f_i`` plus the
    smoothed penalty.
    """
    _reject_hard(spec)
    if view.layout[1:] and (params is None or snapshot is None):
        raise ValueError("an agent with neighbors needs params and a snapshot")
    if params is None:
        params = ProxParams(1.0, 1.0, {}, view.beta)
    if snapshot is None:
        snapshot = NeighborSnapshot({}, {}, {}, {})
    if block_k is None:
        block_k = LocalBlock.from_flat(view, np.zeros(view.size))
    sub = LocalSubproblem(spec, view, params, with_prox)
    nb = sub.nb
    H = sub.H[:nb, :nb]
    g = sub.linear_term(block_k, snapshot)[:nb]
    sol = minimize_smoothed(H, g, view.rows, view.rhs, view.weights, view.beta, cfg.c,
                            sub.lower[:nb], sub.upper[:nb], tol=tol, z0=block_k.flat())
    return LocalBlock.from_flat(view, sol.z)


def solve_smoothed_centralized(problem: CoupledProblem, cfg: SmoothingConfig, tol: float = 1e-10) -> SmoothedSolution:
    """Minimizer of the smoothed total objective over the agents' domains."""
    for a in problem.agents:
        _reject_hard(a)
    H = scipy.linalg.block_diag(*[a.objective.Q for a in problem.agents])
    g = np.concatenate([a.objective.q for a in problem.agents])
    A, b = problem.stacked()
    lower = np.concatenate([a.domain.lower for a in problem.agents])
    upper = np.concatenate([a.domain.upper for a in problem.agents])
    sol = minimize_smoothed(H, g, A, b, np.ones(b.size), problem.beta, cfg.c, lower, upper, tol=tol)
    sol.objective = eval_smoothed_total(problem, sol.z, cfg)
    return sol


def smoothed_local_objective(view: LocalConstraintView, objective: QuadraticObjective, block: LocalBlock,
                             cfg: SmoothingConfig) -> float:
    return objective(block.own) + smoothed_penalty(view, block, cfg)[0]
