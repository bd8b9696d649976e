"""Reference solver for the penalized centralized problem.

All agents and one slack per coupling row go into a single dense QP::

    min  sum_i f_i(x_i) + beta * 1's
    s.t. A x - s <= b,  s >= 0,  x_i in X_i

It exists to be trusted, not to be fast.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import scipy.linalg

from .problem import AgentId, CoupledProblem, eval_penalty, eval_total_objective
from .qp import DEFAULT_MAX_ITER, QpInstance, QpSolution, solve_qp


class CentralizedError(RuntimeError):
    pass


@dataclass(eq=False)
class CentralizedSolution:
    x: np.ndarray
    objective: float
    # per stacked coupling row: multiplier / beta, in [0, 1]
    row_activity: np.ndarray
    # total violation 1'max(0, Ax - b) at x, without the beta factor
    penalty: float
    qp: QpSolution


def centralized_qp(problem: CoupledProblem) -> QpInstance:
    n, m = problem.dim, problem.num_rows
    H = np.zeros((n + m, n + m))
    H[:n, :n] = scipy.linalg.block_diag(*[a.objective.Q for a in problem.agents]) if problem.agents else 0.0
    g = np.concatenate([np.concatenate([a.objective.q for a in problem.agents]) if problem.agents else [],
                        np.full(m, problem.beta)])
    A, b = problem.stacked()
    hard_G, hard_h = [], []
    for a in problem.agents:
        Gi, hi = a.hard_rows()
        if Gi.shape[0]:
            row = np.zeros((Gi.shape[0], n + m))
            row[:, problem.agent_slice(a.id)] = Gi
            hard_G.append(row)
            hard_h.append(hi)
    G = np.vstack([np.hstack([A, -np.eye(m)])] + hard_G)
    h = np.concatenate([b] + hard_h)
    lower = np.concatenate([np.concatenate([a.domain.lower for a in problem.agents]), np.zeros(m)])
    upper = np.concatenate([np.concatenate([a.domain.upper for a in problem.agents]), np.full(m, np.inf)])
    return QpInstance(H, g, G, h, lower, upper)


def solve_centralized(problem: CoupledProblem, tol: float = 1e-9, max_iter: int = DEFAULT_MAX_ITER,
                      warm: Optional[QpSolution] = None) -> CentralizedSolution:
    """Global minimizer of ``F`` over the agents' domains."""
    inst = centralized_qp(problem)
    sol = solve_qp(inst, tol=tol, max_iter=max_iter, warm=warm)
    if not sol.ok:
        raise CentralizedError(f"centralized QP failed: {sol.status} (kkt residual {sol.kkt_residual:.2e})")
    x = sol.z[:problem.dim].copy()
    m = problem.num_rows
    activity = np.clip(sol.ineq_duals[:m] / problem.beta, 0.0, 1.0)
    return CentralizedSolution(x, eval_total_objective(problem, x), activity, eval_penalty(problem, x), sol)


def box_minimizer(problem: CoupledProblem, tol: float = 1e-10) -> np.ndarray:
    """Minimizer of ``sum_i f_i`` over the domains, ignoring the couplings."""
    parts: Dict[AgentId, np.ndarray] = {}
    for a in problem.agents:
        Gi, hi = a.hard_rows()
        sol = solve_qp(QpInstance(a.objective.Q, a.objective.q, Gi, hi, a.domain.lower, a.domain.upper), tol=tol)
        if not sol.ok:
            raise CentralizedError(f"agent {a.id!r}: local QP failed ({sol.status})")
        parts[a.id] = sol.z
    return problem.join(parts)


def objective_range_over_box(problem: CoupledProblem) -> tuple:
    """``(c1, c2)`` with ``c1 <= sum_i f_i(x_i) <= c2`` on the (bounded) box domains.

    ``c1`` is the box-constrained minimum; ``c2`` maximizes each convex ``f_i``
    over the vertices of its box, which is where a convex function attains
    its maximum.  Hard constraints are ignored for ``c2`` (still an upper bound).
    """
    for a in problem.agents:
        if not a.domain.is_bounded:
            raise ValueError(f"agent {a.id!r} has an unbounded domain")
    x_min = box_minimizer(problem)
    parts = problem.split(x_min)
    c1 = sum(a.objective(parts[a.id]) for a in problem.agents)
    c2 = 0.0
    for a in problem.agents:
        lo, up = a.domain.lower, a.domain.upper
        best = -np.inf
        for mask in range(1 << a.dim):
            v = np.where([(mask >> k) & 1 for k in range(a.dim)], up, lo)
            best = max(best, a.objective(v))
        c2 += best
    return float(c1), float(c2)
