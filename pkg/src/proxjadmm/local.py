"""One agent's primal update over its local block.

The update minimizes, over the agent's own decision and its copies of the
neighbors' decisions,

    F_i(x_i)
    + sum_j [ y_ij'(x_j^i - x_j^k) + rho/2 ||x_j^i - x_j^k||^2 ]
    + sum_j [ -y_ji' x_i + rho/2 ||x_i^{j,k} - x_i||^2 ]
    + ||x_i - x_i^k||_P^2            (only with the proximal term)

with neighbors frozen at their iteration-``k`` values.  The ``max{0, .}``
penalty is rewritten with nonnegative slack variables so the subproblem is a
plain QP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from .problem import AgentId, AgentSpec, LocalBlock, LocalConstraintView
from .qp import DEFAULT_MAX_ITER, DEFAULT_TOL, QpInstance, QpSolution, solve_qp


class LocalSolveError(RuntimeError):
    """A local QP did not reach an optimal status."""

    def __init__(self, agent: AgentId, status: str, detail: str = ""):
        self.agent = agent
        self.status = status
        super().__init__(f"local update of agent {agent!r} failed: {status}{(' ' + detail) if detail else ''}")


@dataclass(frozen=True, eq=False)
class NeighborSnapshot:
    """What agent ``i`` receives from its neighbors at iteration ``k``.

    ``neighbor_own[j]`` is ``x_j``, ``copies_of_me[j]`` is neighbor ``j``'s copy
    of ``x_i``, ``neighbor_duals[j]`` is ``y_ji`` and ``my_duals[j]`` is the
    multiplier ``y_ij`` that agent ``i`` holds for ``x_j^i = x_j``.
    """

    neighbor_own: Mapping[AgentId, np.ndarray]
    copies_of_me: Mapping[AgentId, np.ndarray]
    neighbor_duals: Mapping[AgentId, np.ndarray]
    my_duals: Mapping[AgentId, np.ndarray]

    def check(self, neighbors) -> None:
        keys = set(neighbors)
        for name in ("neighbor_own", "copies_of_me", "neighbor_duals", "my_duals"):
            if set(getattr(self, name)) != keys:
                raise ValueError(f"snapshot field {name} must be keyed by the neighbors {sorted(keys)}")


@dataclass(frozen=True, eq=False)
class ProxParams:
    rho: float
    gamma: float
    tau: Mapping[AgentId, float]
    beta: float
    prox_matrix: Mapping[AgentId, np.ndarray] = field(default_factory=dict)
    qp_tol: float = DEFAULT_TOL
    qp_max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if any(t < 0 for t in self.tau.values()):
            raise ValueError("tau must be nonnegative")

    def prox_weight(self, agent: AgentId, size: int) -> np.ndarray:
        """``P_i = tau_i I + prox_matrix[i]``."""
        P = self.tau.get(agent, 0.0) * np.eye(size)
        extra = self.prox_matrix.get(agent)
        if extra is not None:
            P = P + np.asarray(extra, dtype=float)
        return P


@dataclass(eq=False)
class LocalUpdate:
    block: LocalBlock
    qp: QpSolution


class LocalSubproblem:
    """Static part of an agent's update QP.

    Only the linear term depends on the iteration, so the coordinator builds
    this once per run and calls :meth:`solve` every round.
    """

    def __init__(self, spec: AgentSpec, view: LocalConstraintView, params: ProxParams, with_prox: bool = True,
                 tol: Optional[float] = None, max_iter: Optional[int] = None):
        if view.owner != spec.id:
            raise ValueError("view and agent spec belong to different agents")
        if view.dims[0] != spec.dim:
            raise ValueError("view layout does not match the agent dimension")
        self.spec, self.view, self.params, self.with_prox = spec, view, params, with_prox
        self.tol = params.qp_tol if tol is None else tol
        self.max_iter = params.qp_max_iter if max_iter is None else max_iter
        self.neighbors = view.layout[1:]
        self.slices = view.slices()
        nb, m = view.size, view.num_rows
        self.nb, self.m = nb, m
        rho = params.rho
        own = self.slices[spec.id]

        H = np.zeros((nb + m, nb + m))
        H[own, own] = spec.objective.Q + rho * len(self.neighbors) * np.eye(spec.dim)
        for j in self.neighbors:
            sl = self.slices[j]
            H[sl, sl] += rho * np.eye(sl.stop - sl.start)
        self.P = params.prox_weight(spec.id, nb) if with_prox else np.zeros((nb, nb))
        H[:nb, :nb] += 2.0 * self.P
        self.H = 0.5 * (H + H.T)

        G_hard, h_hard = spec.hard_rows()
        G = np.zeros((m + G_hard.shape[0], nb + m))
        G[:m, :nb] = view.rows
        G[:m, nb:] = -np.eye(m)
        G[m:, own] = G_hard
        self.G = G
        self.h = np.concatenate([view.rhs, h_hard])
        lower = np.full(nb + m, -np.inf)
        upper = np.full(nb + m, np.inf)
        lower[own] = spec.domain.lower
        upper[own] = spec.domain.upper
        lower[nb:] = 0.0
        self.lower, self.upper = lower, upper
        self.slack_cost = view.beta * view.weights

    def linear_term(self, block_k: LocalBlock, snapshot: NeighborSnapshot) -> np.ndarray:
        rho = self.params.rho
        g = np.zeros(self.nb + self.m)
        own = self.slices[self.spec.id]
        g[own] = self.spec.objective.q
        for j in self.neighbors:
            g[own] -= snapshot.neighbor_duals[j] + rho * snapshot.copies_of_me[j]
            g[self.slices[j]] = snapshot.my_duals[j] - rho * snapshot.neighbor_own[j]
        g[:self.nb] -= 2.0 * self.P @ block_k.flat()
        g[self.nb:] = self.slack_cost
        return g

    def objective(self, block: LocalBlock, block_k: LocalBlock, snapshot: NeighborSnapshot) -> float:
        """The update's objective evaluated directly (penalty via ``max``, not slacks)."""
        rho = self.params.rho
        value = self.spec.objective(block.own) + self.view.penalty(block.flat())
        for j in self.neighbors:
            dj = block.copies[j] - snapshot.neighbor_own[j]
            value += snapshot.my_duals[j] @ dj + 0.5 * rho * dj @ dj
            di = snapshot.copies_of_me[j] - block.own
            value += -snapshot.neighbor_duals[j] @ block.own + 0.5 * rho * di @ di
        if self.with_prox:
            v = block.flat() - block_k.flat()
            value += v @ self.P @ v
        return float(value)

    def solve(self, block_k: LocalBlock, snapshot: NeighborSnapshot,
              warm: Optional[QpSolution] = None) -> LocalUpdate:
        inst = QpInstance(self.H, self.linear_term(block_k, snapshot), self.G, self.h, self.lower, self.upper)
        sol = solve_qp(inst, tol=self.tol, max_iter=self.max_iter, warm=warm, validate=False)
        if not sol.ok:
            raise LocalSolveError(self.spec.id, sol.status, f"(kkt residual {sol.kkt_residual:.2e})")
        return LocalUpdate(LocalBlock.from_flat(self.view, sol.z[:self.nb]), sol)


def primal_update(spec: AgentSpec, view: LocalConstraintView, block_k: LocalBlock, snapshot: NeighborSnapshot,
                  params: ProxParams, with_prox: bool = True) -> LocalBlock:
    """Proximal Jacobian primal step for one agent.

    With ``with_prox=False`` this is the correction step: the same update
    without the proximal term.
    """
    block_k.check_layout(view)
    snapshot.check(view.layout[1:])
    sub = LocalSubproblem(spec, view, params, with_prox)
    return sub.solve(block_k, snapshot).block


def local_mismatch(block: LocalBlock, snapshot: NeighborSnapshot) -> Dict[AgentId, np.ndarray]:
    """``x_j^i - x_j`` for every neighbor ``j``."""
    if set(block.copies) != set(snapshot.neighbor_own):
        raise ValueError("block copies and snapshot neighbors differ")
    return {j: block.copies[j] - snapshot.neighbor_own[j] for j in block.copies}
