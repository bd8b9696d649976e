"""Online decision making over a time-indexed sequence of coupled problems.

Every time step runs a fixed budget of ``M`` ADMM rounds on the current
problem, applies the correction round and emits the corrected decisions.
With warm starting the final blocks and multipliers of one step seed the
next; otherwise every step starts from zeros.

The module also holds the continuity diagnostics: the Lipschitz constant
``kappa`` of ``F[t+1] - F[t]`` (sampled lower bound and a certified
analytic upper bound), the resulting bounds on how far the optimal primal
and consensus-dual solutions can move between steps, and the interpolation
experiment that tracks those solutions along a path of constraint data.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.special import expit

from .centralized import box_minimizer, solve_centralized
from .coordinator import (DEFAULT_STOP_TOL, AdmmError, GapCertificate, IterationState, correction,
                          gap_certificate, run_admm, select_params)
from .generators import random_pairwise_problem, redraw_coupling
from .local import ProxParams
from .problem import (AgentId, CoupledProblem, CouplingConstraint, LocalBlock, eval_penalty,
                      eval_total_objective)
from .smoothing import SmoothingConfig, eval_smoothed_total, smoothed_total_penalty, solve_smoothed_centralized

DEFAULT_M = 30
DEFAULT_DT = 0.05

ParamSource = Union[ProxParams, Callable[[CoupledProblem], ProxParams], None]


class OnlineError(RuntimeError):
    def __init__(self, t: int, cause: Exception):
        self.t = t
        super().__init__(f"time step {t}: {cause}")


class ProblemSequence:
    """Problems ``F[0], ..., F[horizon-1]`` produced on demand and cached.

    With ``fixed_structure`` every problem must have the agents, dimensions
    and coupling member sets of ``F[0]``; only the numbers may change.
    """

    def __init__(self, generator: Callable[[int], CoupledProblem], horizon: int, fixed_structure: bool = True):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.generator, self.horizon, self.fixed_structure = generator, horizon, fixed_structure
        self._cache: Dict[int, CoupledProblem] = {}

    @classmethod
    def from_problems(cls, problems: Sequence[CoupledProblem]) -> "ProblemSequence":
        problems = list(problems)
        return cls(lambda t: problems[t], len(problems))

    def problem(self, t: int) -> CoupledProblem:
        if not 0 <= t < self.horizon:
            raise IndexError(f"time step {t} outside [0, {self.horizon})")
        if t not in self._cache:
            p = self.generator(t)
            if self.fixed_structure and t > 0 and not p.same_structure(self.problem(0)):
                raise ValueError(f"problem at step {t} changes the agent set or coupling pattern")
            self._cache[t] = p
        return self._cache[t]


def drifting_sequence(base: CoupledProblem, rng: np.random.Generator, horizon: int,
                      scale: float = 0.05) -> ProblemSequence:
    """Random walk on ``q``, ``A_s`` and ``b_s`` with Gaussian steps of size ``scale``."""
    problems = [base]
    for _ in range(horizon - 1):
        prev = problems[-1]
        agents = []
        for a in prev.agents:
            obj = type(a.objective)(a.objective.Q, a.objective.q + scale * rng.normal(size=a.dim), a.objective.c0)
            agents.append(type(a)(a.id, obj, a.domain, a.local_hard_constraints))
        couplings = [CouplingConstraint(c.members,
                                        {i: c.blocks[i] + scale * rng.normal(size=c.blocks[i].shape)
                                         for i in c.members},
                                        c.rhs + scale * rng.normal(size=c.rows))
                     for c in prev.couplings]
        problems.append(CoupledProblem(agents, couplings, prev.beta))
    return ProblemSequence.from_problems(problems)


# --- the online loop --------------------------------------------------------

@dataclass(eq=False)
class StepRecord:
    t: int
    decisions: np.ndarray
    # consensus violation after the first and after the last round of the step
    start_violation: float
    end_violation: float
    iterations: int
    objective: float
    certificate: GapCertificate
    oracle_objective: float = math.nan
    wall_ms: float = math.nan
    initial_state: Optional[IterationState] = field(default=None, repr=False)
    final_state: Optional[IterationState] = field(default=None, repr=False)

    @property
    def gap_bound(self) -> float:
        return self.certificate.bound


def carry_state(state: IterationState, problem: CoupledProblem) -> IterationState:
    """Reuse ``state`` as the starting point on ``problem``.

    Blocks and multipliers for agents and neighbor pairs that persist are
    kept as they are.  A copy of a newly acquired neighbor starts from that
    neighbor's carried decision and its multiplier starts at zero.  When the
    structure is unchanged this is an exact copy of the blocks and duals.
    """
    blocks: Dict[AgentId, LocalBlock] = {}
    for i in problem.ids:
        dim = problem.agent(i).dim
        old = state.blocks.get(i)
        own = old.own.copy() if old is not None else np.zeros(dim)
        copies = {}
        for j in problem.neighbors[i]:
            if old is not None and j in old.copies:
                copies[j] = old.copies[j].copy()
            elif j in state.blocks:
                copies[j] = state.blocks[j].own.copy()
            else:
                copies[j] = np.zeros(problem.agent(j).dim)
        blocks[i] = LocalBlock(i, own, copies)
    duals = {}
    for i, j in problem.directed_pairs():
        y = state.duals.get((i, j))
        duals[(i, j)] = y.copy() if y is not None else np.zeros(problem.agent(j).dim)
    same = set(state.duals) == set(duals) and all(
        state.blocks[i].layout == blocks[i].layout for i in problem.ids if i in state.blocks)
    warm = dict(state.warm) if same else {}
    return IterationState(0, blocks, duals, [], warm)


class OnlineSolver:
    """Step-by-step driver; keeps the state carried between time steps."""

    def __init__(self, params: ParamSource = None, M: int = DEFAULT_M, warm: bool = True,
                 stop_tol: float = DEFAULT_STOP_TOL, workers: Optional[int] = None,
                 oracle: bool = False, keep_states: bool = False):
        if M < 1:
            raise ValueError("M must be at least 1")
        self.params, self.M, self.warm = params, M, warm
        self.stop_tol, self.workers = stop_tol, workers
        self.oracle, self.keep_states = oracle, keep_states
        self.state: Optional[IterationState] = None
        self.t = 0

    def params_for(self, problem: CoupledProblem) -> ProxParams:
        if self.params is None:
            return select_params(problem, mode="practical")
        if isinstance(self.params, ProxParams):
            return self.params
        return self.params(problem)

    def step(self, problem: CoupledProblem) -> StepRecord:
        t = self.t
        try:
            params = self.params_for(problem)
            if self.warm and self.state is not None:
                init = carry_state(self.state, problem)
            else:
                init = IterationState.zeros(problem)
            start = time.perf_counter()
            state = run_admm(problem, params, init, self.M, self.stop_tol, self.workers)
            fixed = correction(problem, params, state, self.workers)
            wall_ms = 1e3 * (time.perf_counter() - start)
            cert = gap_certificate(problem, params, fixed, state)
            oracle = solve_centralized(problem).objective if self.oracle else math.nan
        except (AdmmError, RuntimeError) as exc:
            raise OnlineError(t, exc) from exc
        x = problem.join({i: fixed[i].own for i in problem.ids})
        hist = state.history
        rec = StepRecord(t, x, hist[min(1, len(hist) - 1)].consensus_violation, hist[-1].consensus_violation,
                         state.k, eval_total_objective(problem, x), cert, oracle, wall_ms,
                         init.copy() if self.keep_states else None,
                         state.copy() if self.keep_states else None)
        self.state = state
        self.t += 1
        return rec


def run_online(seq: ProblemSequence, params: ParamSource = None, M: int = DEFAULT_M, warm: bool = True,
               stop_tol: float = DEFAULT_STOP_TOL, workers: Optional[int] = None, oracle: bool = False,
               keep_states: bool = False) -> List[StepRecord]:
    """Warm-started (or cold) online ADMM over every step of ``seq``.

    ``params`` is a fixed :class:`ProxParams`, a function of the step's
    problem, or ``None`` for the practical defaults of ``select_params``.
    Each step runs at most ``M`` rounds (fewer once the stopping rule
    fires), then the correction round.
    """
    solver = OnlineSolver(params, M, warm, stop_tol, workers, oracle, keep_states)
    return [solver.step(seq.problem(t)) for t in range(seq.horizon)]


ONLINE_COLUMNS = ["t", "start_violation", "end_violation", "iterations", "objective", "gap_bound",
                  "oracle_objective"]


def write_online_csv(records: Sequence[StepRecord], out: Union[str, TextIO], wall_time: bool = False) -> None:
    """Per-step CSV.  Wall time is opt-in because it breaks byte-for-byte reproducibility."""
    close = False
    if isinstance(out, str):
        out = open(out, "w", newline="")
        close = True
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(ONLINE_COLUMNS + (["wall_ms"] if wall_time else []))
        for r in records:
            row = [r.t, repr(r.start_violation), repr(r.end_violation), r.iterations, repr(r.objective),
                   repr(r.gap_bound), repr(r.oracle_objective)]
            if wall_time:
                row.append(repr(r.wall_ms))
            w.writerow(row)
    finally:
        if close:
            out.close()


def online_csv_text(records: Sequence[StepRecord], wall_time: bool = False) -> str:
    buf = io.StringIO()
    write_online_csv(records, buf, wall_time)
    return buf.getvalue()


# --- continuity ---------------------------------------------------------------

def _row_offsets(problem: CoupledProblem) -> List[int]:
    return list(np.concatenate([[0], np.cumsum([c.rows for c in problem.couplings])]).astype(int))


def consensus_duals(problem: CoupledProblem, activity: np.ndarray) -> Dict[Tuple[AgentId, AgentId], np.ndarray]:
    """Multipliers of ``x_j^i = x_j`` at a consensus optimum.

    ``activity[n]`` in ``[0, 1]`` is the derivative of the (smoothed or exact)
    penalty shape at stacked row ``n``: ``sigmoid(c z_n)`` when smoothed, the
    normalized QP multiplier otherwise.  Stationarity of agent ``i``'s local
    objective in its copy ``x_j^i`` gives
    ``y_ij = -sum_n beta w_n activity_n (A_n^i restricted to x_j)'``.
    """
    offsets = _row_offsets(problem)
    out = {}
    for i, j in problem.directed_pairs():
        v = problem.view(i)
        sl = v.slices()[j]
        y = np.zeros(problem.agent(j).dim)
        for n, (ci, r) in enumerate(v.sources):
            y -= problem.beta * v.weights[n] * activity[offsets[ci] + r] * v.rows[n, sl]
        out[(i, j)] = y
    return out


def flatten_duals(problem: CoupledProblem, duals) -> np.ndarray:
    pairs = problem.directed_pairs()
    return np.concatenate([duals[p] for p in pairs]) if pairs else np.zeros(0)


def _block_diag_Q(problem: CoupledProblem) -> np.ndarray:
    return scipy.linalg.block_diag(*[a.objective.Q for a in problem.agents])


def _stacked_q(problem: CoupledProblem) -> np.ndarray:
    return np.concatenate([a.objective.q for a in problem.agents])


def penalty_value(problem: CoupledProblem, x, smoothing: Optional[SmoothingConfig]) -> float:
    """``F(x) - sum_i f_i(x_i)``: ``beta`` times the exact or smoothed violation."""
    if smoothing is None:
        return problem.beta * eval_penalty(problem, x)
    return smoothed_total_penalty(problem, x, smoothing)[0]


def total_value(problem: CoupledProblem, x, smoothing: Optional[SmoothingConfig]) -> float:
    if smoothing is None:
        return eval_total_objective(problem, x)
    return eval_smoothed_total(problem, x, smoothing)


def certified_region(p1: CoupledProblem, p2: CoupledProblem,
                     smoothing: Optional[SmoothingConfig] = None) -> Tuple[np.ndarray, float]:
    """Ball ``(center, radius)`` guaranteed to contain both optimal solutions.

    With ``x_b`` the minimizer of ``sum_i f_i`` over the domains,
    ``f(x*) >= f(x_b) + sigma/2 ||x* - x_b||^2`` and ``f(x*) <= F(x*) <= F(x_b)``
    give ``||x* - x_b|| <= sqrt(2 (F(x_b) - f(x_b)) / sigma)``.
    """
    def ball(p):
        xb = box_minimizer(p)
        return xb, math.sqrt(max(0.0, 2.0 * penalty_value(p, xb, smoothing) / p.sigma))

    c1, r1 = ball(p1)
    c2, r2 = ball(p2)
    return c1, max(r1, float(np.linalg.norm(c2 - c1)) + r2)


def analytic_kappa(p1: CoupledProblem, p2: CoupledProblem, center: np.ndarray, radius: float,
                   smoothing: Optional[SmoothingConfig] = None) -> float:
    """Certified Lipschitz constant of ``F2 - F1`` on the ball ``B(center, radius)``.

    Quadratic part: ``||dQ center + dq|| + ||dQ||_2 radius``.  Penalty part,
    row by row (triangle inequality over rows): the exact difference of two
    hinges is piecewise linear, so its constant is the largest gradient norm
    over the pieces that can meet the ball; the smoothed difference has
    gradient ``s2 a2 - s1 a1`` with sigmoids ``s1, s2 in [0, 1]`` whose gap is
    at most ``c/4`` times the spread of ``z2 - z1`` over the ball.
    """
    if not p1.same_structure(p2):
        raise ValueError("problems must share agents, dimensions and coupling pattern")
    dQ = _block_diag_Q(p2) - _block_diag_Q(p1)
    dq = _stacked_q(p2) - _stacked_q(p1)
    kappa = float(np.linalg.norm(dQ @ center + dq)) + (float(np.linalg.norm(dQ, 2)) * radius if dQ.size else 0.0)
    A1, b1 = p1.stacked()
    A2, b2 = p2.stacked()
    if p1.beta != p2.beta:
        raise ValueError("beta must not change between the two problems")
    rows = 0.0
    for a, b, a2, b2_ in zip(A1, b1, A2, b2):
        if np.array_equal(a, a2) and b == b2_:
            continue
        da = a2 - a
        if smoothing is None:
            on = lambda u, v: u @ center - v + np.linalg.norm(u) * radius > 0
            off = lambda u, v: u @ center - v - np.linalg.norm(u) * radius < 0
            best = 0.0
            for s1 in (0, 1):
                for s2 in (0, 1):
                    ok1 = on(a, b) if s1 else off(a, b)
                    ok2 = on(a2, b2_) if s2 else off(a2, b2_)
                    if ok1 and ok2:
                        best = max(best, float(np.linalg.norm(s2 * a2 - s1 * a)))
        else:
            spread = abs(da @ center - (b2_ - b)) + float(np.linalg.norm(da)) * radius
            sig_gap = min(1.0, 0.25 * smoothing.c * spread)
            best = min(max(np.linalg.norm(a), np.linalg.norm(a2), np.linalg.norm(da)),
                       np.linalg.norm(da) + sig_gap * np.linalg.norm(a))
        rows += float(best)
    return kappa + p1.beta * rows


def sampled_kappa(p1: CoupledProblem, p2: CoupledProblem, center: np.ndarray, radius: float,
                  rng: np.random.Generator, samples: int = 500,
                  smoothing: Optional[SmoothingConfig] = None) -> float:
    """Lower bound on the Lipschitz constant of ``F2 - F1`` from random pairs.

    Points are drawn in the ball and projected onto the domains (which keeps
    them in the ball, since the center is feasible).  Half the pairs are far
    apart, half are short steps that probe local slopes.
    """
    lower = np.concatenate([a.domain.lower for a in p1.agents])
    upper = np.concatenate([a.domain.upper for a in p1.agents])
    n = center.size
    if n == 0 or radius == 0.0:
        return 0.0

    def diff(x):
        return total_value(p2, x, smoothing) - total_value(p1, x, smoothing)

    def point():
        d = rng.normal(size=n)
        d /= max(np.linalg.norm(d), 1e-300)
        return np.clip(center + radius * rng.uniform() ** (1.0 / n) * d, lower, upper)

    best = 0.0
    for k in range(samples):
        x = point()
        if k % 2 == 0:
            x2 = point()
        else:
            d = rng.normal(size=n)
            x2 = np.clip(x + 1e-3 * radius * d / np.linalg.norm(d), lower, upper)
        dist = float(np.linalg.norm(x2 - x))
        if dist > 1e-12:
            best = max(best, abs(diff(x2) - diff(x)) / dist)
    return best


@dataclass
class ContinuityReport:
    kappa_hat: float
    kappa: float
    sigma: float
    primal_step: float
    primal_bound: float
    dual_step: float = math.nan
    dual_bound: float = math.nan
    max_members: int = 0
    a_frobenius: float = math.nan
    region_center: Optional[np.ndarray] = field(default=None, repr=False)
    region_radius: float = math.nan

    @property
    def primal_holds(self) -> bool:
        return self.primal_step <= self.primal_bound + 1e-6

    @property
    def dual_holds(self) -> bool:
        return math.isnan(self.dual_bound) or self.dual_step <= self.dual_bound + 1e-6


def solve_reference(problem: CoupledProblem, smoothing: Optional[SmoothingConfig] = None):
    """Optimal ``x`` and per-row activity for the exact or smoothed problem."""
    if smoothing is None:
        sol = solve_centralized(problem)
        return sol.x, sol.row_activity
    sol = solve_smoothed_centralized(problem, smoothing)
    A, b = problem.stacked()
    return sol.z, expit(smoothing.c * (A @ sol.z - b))


def dual_bound(p1: CoupledProblem, p2: CoupledProblem, kappa: float, sigma: float, c: float) -> float:
    """``||A||_F^2 (s_max - 1)/s_max beta c kappa / sigma`` with the larger ``||A||_F`` of the two problems."""
    smax = max(p1.max_members, p2.max_members)
    if smax <= 1:
        return 0.0
    a_f = max(np.linalg.norm(p1.stacked()[0]), np.linalg.norm(p2.stacked()[0]))
    return a_f ** 2 * (smax - 1) / smax * p1.beta * c * kappa / sigma


def continuity_between(p1: CoupledProblem, p2: CoupledProblem, smoothing: Optional[SmoothingConfig] = None,
                       samples: int = 500, rng: Optional[np.random.Generator] = None,
                       solutions=None) -> ContinuityReport:
    """Continuity diagnostics for one pair of consecutive problems.

    ``solutions`` optionally passes precomputed ``solve_reference`` results
    for both problems.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for a1, a2 in zip(p1.agents, p2.agents):
        if not (np.array_equal(a1.domain.lower, a2.domain.lower) and np.array_equal(a1.domain.upper, a2.domain.upper)):
            raise ValueError(f"agent {a1.id!r}: the domain must not change between the two problems")
    center, radius = certified_region(p1, p2, smoothing)
    kappa = analytic_kappa(p1, p2, center, radius, smoothing)
    kappa_hat = sampled_kappa(p1, p2, center, radius, rng, samples, smoothing)
    sigma = min(p1.sigma, p2.sigma)
    (x1, act1), (x2, act2) = solutions if solutions is not None else (solve_reference(p1, smoothing),
                                                                       solve_reference(p2, smoothing))
    report = ContinuityReport(kappa_hat, kappa, sigma, float(np.linalg.norm(x2 - x1)), kappa / sigma,
                              max_members=max(p1.max_members, p2.max_members),
                              a_frobenius=float(max(np.linalg.norm(p1.stacked()[0]), np.linalg.norm(p2.stacked()[0]))),
                              region_center=center, region_radius=radius)
    if smoothing is not None:
        y1 = flatten_duals(p1, consensus_duals(p1, act1))
        y2 = flatten_duals(p2, consensus_duals(p2, act2))
        report.dual_step = float(np.linalg.norm(y2 - y1))
        report.dual_bound = dual_bound(p1, p2, kappa, sigma, smoothing.c)
    return report


def continuity_report(seq: ProblemSequence, t: int, smoothing: Optional[SmoothingConfig] = None,
                      samples: int = 500, rng: Optional[np.random.Generator] = None) -> ContinuityReport:
    """Diagnostics for the step from ``F[t]`` to ``F[t+1]``."""
    if not 0 <= t < seq.horizon - 1:
        raise ValueError(f"need 0 <= t < horizon - 1, got t={t}")
    return continuity_between(seq.problem(t), seq.problem(t + 1), smoothing, samples, rng)


# --- interpolation experiment -------------------------------------------------

def interpolate(p1: CoupledProblem, p2: CoupledProblem, lam: float) -> CoupledProblem:
    """Objectives of ``p1``; coupling data ``lam * (A1, b1) + (1 - lam) * (A2, b2)``."""
    if not p1.same_structure(p2):
        raise ValueError("interpolated problems must share agents and coupling pattern")
    couplings = [CouplingConstraint(c1.members, {i: lam * c1.blocks[i] + (1 - lam) * c2.blocks[i] for i in c1.members},
                                    lam * c1.rhs + (1 - lam) * c2.rhs)
                 for c1, c2 in zip(p1.couplings, p2.couplings)]
    return CoupledProblem(p1.agents, couplings, p1.beta)


def interpolation_endpoints(rng: np.random.Generator, num_agents: int = 8, dims: int = 2,
                            beta: float = 10.0) -> Tuple[CoupledProblem, CoupledProblem]:
    """Two pairwise instances with shared objectives and coupling pattern.

    The second keeps the first's agents and member sets and redraws every
    coupling block and right-hand side from the same distribution.
    """
    p1 = random_pairwise_problem(num_agents, rng, dims=dims, beta=beta)
    centers = {a.id: np.linalg.solve(a.objective.Q, -a.objective.q) for a in p1.agents}
    couplings = [redraw_coupling(c.members, p1.agents, centers, c.rows, rng) for c in p1.couplings]
    return p1, CoupledProblem(p1.agents, couplings, beta)


@dataclass
class InterpolationRow:
    lam: float
    x: np.ndarray
    y: np.ndarray
    # diagnostics for the step from the previous grid point (nan on the first row)
    primal_step: float = math.nan
    primal_bound: float = math.nan
    dual_step: float = math.nan
    dual_bound: float = math.nan


def interpolation_experiment(p1: CoupledProblem, p2: CoupledProblem, steps: int,
                             smoothing: Optional[SmoothingConfig] = None) -> List[InterpolationRow]:
    """Optimal ``x`` and consensus duals ``y`` along ``lam`` in ``linspace(0, 1, steps)``.

    Without smoothing the duals come from the oracle QP multipliers, which
    need not be unique, so their steps carry no bound (``dual_bound`` nan).
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    grid = np.linspace(0.0, 1.0, steps) if steps > 1 else np.array([0.0])
    rows: List[InterpolationRow] = []
    prev = None
    for lam in grid:
        prob = interpolate(p1, p2, float(lam))
        x, act = solve_reference(prob, smoothing)
        y = flatten_duals(prob, consensus_duals(prob, act))
        row = InterpolationRow(float(lam), x, y)
        if prev is not None:
            pprob, px, pact, py = prev
            center, radius = certified_region(pprob, prob, smoothing)
            kappa = analytic_kappa(pprob, prob, center, radius, smoothing)
            sigma = min(pprob.sigma, prob.sigma)
            row.primal_step = float(np.linalg.norm(x - px))
            row.primal_bound = kappa / sigma
            row.dual_step = float(np.linalg.norm(y - py))
            if smoothing is not None:
                row.dual_bound = dual_bound(pprob, prob, kappa, sigma, smoothing.c)
        rows.append(row)
        prev = (prob, x, act, y)
    return rows


def interpolation_csv_text(tables: Dict[str, List[InterpolationRow]]) -> str:
    """One block of columns per mode: ``<mode>_x<k>``, ``<mode>_y<k>``, plus the bound columns."""
    modes = list(tables)
    n = {len(t) for t in tables.values()}
    if len(n) != 1:
        raise ValueError("all tables need the same number of rows")
    header = ["lam"]
    for m in modes:
        first = tables[m][0]
        header += [f"{m}_x{k}" for k in range(first.x.size)] + [f"{m}_y{k}" for k in range(first.y.size)]
        header += [f"{m}_{name}" for name in ("primal_step", "primal_bound", "dual_step", "dual_bound")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in range(n.pop()):
        line = [repr(tables[modes[0]][r].lam)]
        for m in modes:
            row = tables[m][r]
            line += [repr(float(v)) for v in row.x] + [repr(float(v)) for v in row.y]
            line += [repr(row.primal_step), repr(row.primal_bound), repr(row.dual_step), repr(row.dual_bound)]
        w.writerow(line)
    return buf.getvalue()
