"""Synchronous proximal Jacobian ADMM over local copies.

Each round every agent solves its local update from the round-``k``
snapshot of its neighbors (possibly on a thread pool), then each agent
updates the multipliers it holds::

    y_ij <- y_ij + gamma * rho * (x_j^i - x_j)

using the new values.  Agent ``i`` owns ``y_ij`` for the copy ``x_j^i`` it
keeps.  All cross-agent reductions run in a fixed order so results do not
depend on the thread count.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from .local import LocalSolveError, LocalSubproblem, NeighborSnapshot, ProxParams
from .problem import AgentId, CoupledProblem, LocalBlock, consensus_violation, eval_total_objective
from .qp import QpSolution

DEFAULT_STOP_TOL = 1e-6
DEFAULT_MARGIN = 0.01
DEFAULT_TAU_FACTOR = 0.25


class AdmmError(RuntimeError):
    def __init__(self, agent: AgentId, iteration: int, cause: Exception):
        self.agent = agent
        self.iteration = iteration
        super().__init__(f"agent {agent!r} failed at iteration {iteration}: {cause}")


@dataclass
class HistoryRow:
    iteration: int
    consensus_violation: float
    total_objective: float
    gap_bound: float = math.nan


@dataclass(eq=False)
class IterationState:
    k: int
    blocks: Dict[AgentId, LocalBlock]
    duals: Dict[Tuple[AgentId, AgentId], np.ndarray]
    history: List[HistoryRow] = field(default_factory=list)
    # last QP solution per agent; only used to warm start the next solve
    warm: Dict[AgentId, QpSolution] = field(default_factory=dict, repr=False)

    @classmethod
    def zeros(cls, problem: CoupledProblem) -> "IterationState":
        blocks = {i: LocalBlock(i, np.zeros(problem.agent(i).dim),
                                {j: np.zeros(problem.agent(j).dim) for j in problem.neighbors[i]})
                  for i in problem.ids}
        duals = {(i, j): np.zeros(problem.agent(j).dim) for i, j in problem.directed_pairs()}
        return cls(0, blocks, duals)

    def copy(self) -> "IterationState":
        return IterationState(self.k, {i: b.copy() for i, b in self.blocks.items()},
                              {p: y.copy() for p, y in self.duals.items()},
                              list(self.history), dict(self.warm))

    def decisions(self, problem: CoupledProblem) -> np.ndarray:
        return problem.join({i: self.blocks[i].own for i in problem.ids})

    def check(self, problem: CoupledProblem) -> None:
        if set(self.blocks) != set(problem.ids):
            raise ValueError("state blocks must be keyed by the problem's agents")
        for i in problem.ids:
            self.blocks[i].check_layout(problem.view(i))
        if set(self.duals) != set(problem.directed_pairs()):
            raise ValueError("state duals must be keyed by the directed neighbor pairs")
        for (i, j), y in self.duals.items():
            if y.shape != (problem.agent(j).dim,):
                raise ValueError(f"dual ({i!r}, {j!r}) has shape {y.shape}")


@dataclass(frozen=True)
class GapCertificate:
    """Computable upper bound on ``J(x) - J*`` after the correction step."""

    penalty_part: float
    lagrangian_part: float

    @property
    def bound(self) -> float:
        return self.penalty_part + self.lagrangian_part


# --- parameters -------------------------------------------------------------

def consensus_gram_max_eig(problem: CoupledProblem, agent: AgentId) -> float:
    """Largest eigenvalue of ``A_i'A_i`` for the consensus system, floored at 1.

    The own decision appears with ``-I`` in ``N_i`` equalities and each copy
    with ``+I`` in one, so ``A_i'A_i = blkdiag(N_i I, I, ..., I)``.
    """
    return float(max(len(problem.neighbors[agent]), 1))


def select_params(problem: CoupledProblem, gamma: float = 1.0, eps: Optional[Mapping[AgentId, float]] = None,
                  rho: float = 1.0, mode: str = "theory", margin: float = DEFAULT_MARGIN,
                  tau_factor: float = DEFAULT_TAU_FACTOR) -> ProxParams:
    """Choose the proximal weights ``P_i = tau_i I``.

    ``mode="theory"`` enforces the sufficient convergence condition
    ``P_i > rho (1/eps_i - 1) A_i'A_i`` with ``sum(eps_i) <= 2 - gamma``;
    ``eps`` defaults to the uniform allocation ``(2 - gamma)/N``.
    ``mode="practical"`` uses ``tau_i = tau_factor * rho * N_i``, which works
    well in practice but carries no guarantee.
    """
    if mode not in ("theory", "practical"):
        raise ValueError(f"unknown parameter mode {mode!r}")
    if not 0 < gamma:
        raise ValueError("gamma must be positive")
    n_agents = len(problem.ids)
    tau: Dict[AgentId, float] = {}
    if mode == "practical":
        for i in problem.ids:
            tau[i] = tau_factor * rho * len(problem.neighbors[i])
        return ProxParams(rho, gamma, tau, problem.beta)

    if eps is None:
        if gamma >= 2:
            raise ValueError("uniform allocation needs gamma < 2")
        eps = {i: (2.0 - gamma) / n_agents for i in problem.ids}
    if any(e <= 0 for e in eps.values()):
        raise ValueError("every eps_i must be positive")
    if sum(eps[i] for i in problem.ids) > 2.0 - gamma + 1e-12:
        warnings.warn("sum of eps_i exceeds 2 - gamma; the convergence condition does not hold", RuntimeWarning)
    for i in problem.ids:
        coef = rho * (1.0 / eps[i] - 1.0) * consensus_gram_max_eig(problem, i)
        # strict inequality: fall back to a small positive weight when the bound is <= 0
        tau[i] = coef * (1.0 + margin) if coef > 0 else margin * rho
    return ProxParams(rho, gamma, tau, problem.beta)


# --- rounds -----------------------------------------------------------------

def snapshot_for(problem: CoupledProblem, agent: AgentId, blocks: Mapping[AgentId, LocalBlock],
                 duals: Mapping[Tuple[AgentId, AgentId], np.ndarray]) -> NeighborSnapshot:
    nbrs = problem.neighbors[agent]
    return NeighborSnapshot(
        neighbor_own={j: blocks[j].own for j in nbrs},
        copies_of_me={j: blocks[j].copies[agent] for j in nbrs},
        neighbor_duals={j: duals[(j, agent)] for j in nbrs},
        my_duals={j: duals[(agent, j)] for j in nbrs},
    )


class _Runner:
    """Per-run cache of the static local subproblems."""

    def __init__(self, problem: CoupledProblem, params: ProxParams, with_prox: bool, workers: Optional[int]):
        self.problem = problem
        self.subs = {i: LocalSubproblem(problem.agent(i), problem.view(i), params, with_prox)
                     for i in problem.ids}
        self.workers = workers

    def round(self, blocks, duals, warm, iteration: int):
        problem = self.problem
        snaps = {i: snapshot_for(problem, i, blocks, duals) for i in problem.ids}

        def work(i):
            try:
                return self.subs[i].solve(blocks[i], snaps[i], warm.get(i))
            except LocalSolveError as exc:
                raise AdmmError(i, iteration, exc) from exc

        if self.workers and self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(work, problem.ids))
        else:
            results = [work(i) for i in problem.ids]
        new_blocks = {i: r.block for i, r in zip(problem.ids, results)}
        new_warm = {i: r.qp for i, r in zip(problem.ids, results)}
        return new_blocks, new_warm


def _dual_step(problem, params, blocks, duals):
    step = params.gamma * params.rho
    return {(i, j): duals[(i, j)] + step * (blocks[i].copies[j] - blocks[j].own)
            for i, j in problem.directed_pairs()}


def _max_change(problem, old, new) -> float:
    return max((float(np.abs(new[i].flat() - old[i].flat()).max(initial=0.0)) for i in problem.ids), default=0.0)


def run_admm(problem: CoupledProblem, params: ProxParams, init: Optional[IterationState] = None,
             max_iter: int = 100, stop_tol: float = DEFAULT_STOP_TOL, workers: Optional[int] = None,
             track_gap: bool = False, callback: Optional[Callable[[IterationState], None]] = None) -> IterationState:
    """Run up to ``max_iter`` synchronous rounds.

    Stops early once the consensus violation ``sum ||x_j^i - x_j||`` and the
    largest change of any block entry over the last round are both at most
    ``stop_tol``.  With ``track_gap`` every history row also records the gap
    bound of a correction taken at that iteration (one extra round each).
    The input state is not modified.
    """
    state = (init if init is not None else IterationState.zeros(problem)).copy()
    state.check(problem)
    runner = _Runner(problem, params, True, workers)
    corr = _Runner(problem, params, False, workers) if track_gap else None

    def record(st):
        gap = math.nan
        if corr is not None:
            fixed, _ = corr.round(st.blocks, st.duals, st.warm, st.k)
            gap = gap_certificate(problem, params, fixed, st).bound
        st.history.append(HistoryRow(st.k, consensus_violation(problem, st.blocks),
                                     eval_total_objective(problem, st.decisions(problem)), gap))

    if not state.history:
        record(state)
    for _ in range(max_iter):
        new_blocks, new_warm = runner.round(state.blocks, state.duals, state.warm, state.k + 1)
        change = _max_change(problem, state.blocks, new_blocks)
        state.duals = _dual_step(problem, params, new_blocks, state.duals)
        state.blocks = new_blocks
        state.warm = new_warm
        state.k += 1
        record(state)
        if callback is not None:
            callback(state)
        if state.history[-1].consensus_violation <= stop_tol and change <= stop_tol:
            break
    return state


def correction(problem: CoupledProblem, params: ProxParams, state: IterationState,
               workers: Optional[int] = None) -> Dict[AgentId, LocalBlock]:
    """One more parallel round without the proximal term, multipliers frozen.

    The own parts of the returned blocks are the decisions to apply.
    """
    state.check(problem)
    blocks, _ = _Runner(problem, params, False, workers).round(state.blocks, state.duals, state.warm, state.k)
    return blocks


def gap_certificate(problem: CoupledProblem, params: ProxParams, corrected: Mapping[AgentId, LocalBlock],
                    state: IterationState) -> GapCertificate:
    """Bound on ``J(x) - J*`` from copy mismatches and the held multipliers.

    ``penalty_part = sum_s beta/|s| sum_{i in s} sum_{j in s, j != i} 1'|A_s^j| |x_j^i - x_j|``
    ``lagrangian_part = -sum_{i, j in N_i} (y_ij'(x_j^i - x_j) + rho/2 ||x_j^i - x_j||^2)``
    """
    beta, rho = problem.beta, params.rho
    penalty = 0.0
    for c in problem.couplings:
        share = beta / len(c.members)
        for i in c.members:
            for j in c.members:
                if j == i:
                    continue
                diff = np.abs(corrected[i].copies[j] - corrected[j].own)
                penalty += share * float(np.sum(np.abs(c.blocks[j]) @ diff))
    lagr = 0.0
    for i, j in problem.directed_pairs():
        diff = corrected[i].copies[j] - corrected[j].own
        lagr -= float(state.duals[(i, j)] @ diff) + 0.5 * rho * float(diff @ diff)
    return GapCertificate(penalty, lagr)


@dataclass(eq=False)
class DecentralizedResult:
    state: IterationState
    corrected: Dict[AgentId, LocalBlock]
    certificate: GapCertificate
    x: np.ndarray
    objective: float


def solve_decentralized(problem: CoupledProblem, params: ProxParams, max_iter: int = 100,
                        stop_tol: float = DEFAULT_STOP_TOL, init: Optional[IterationState] = None,
                        workers: Optional[int] = None) -> DecentralizedResult:
    """``run_admm`` followed by the correction step and its certificate."""
    state = run_admm(problem, params, init, max_iter, stop_tol, workers)
    fixed = correction(problem, params, state, workers)
    cert = gap_certificate(problem, params, fixed, state)
    x = problem.join({i: fixed[i].own for i in problem.ids})
    return DecentralizedResult(state, fixed, cert, x, eval_total_objective(problem, x))


# --- export -----------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_history_csv(history: Sequence[HistoryRow], out: Union[str, TextIO]) -> None:
    """CSV with columns iteration, consensus_violation, total_objective, gap_bound."""
    close = False
    if isinstance(out, str):
        out = open(out, "w", newline="")
        close = True
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["iteration", "consensus_violation", "total_objective", "gap_bound"])
        for row in history:
            w.writerow([row.iteration, _fmt(row.consensus_violation), _fmt(row.total_objective),
                        _fmt(row.gap_bound)])
    finally:
        if close:
            out.close()


def history_csv_text(history: Sequence[HistoryRow]) -> str:
    buf = io.StringIO()
    write_history_csv(history, buf)
    return buf.getvalue()
