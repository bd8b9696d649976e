"""Multi-vehicle collision avoidance with control barrier functions.

Vehicles follow the Dubins model with acceleration ``a`` and yaw rate
``omega`` as inputs.  Each control step builds a minimum-intervention
problem: every vehicle stays as close as possible to its nominal input
subject to the barrier conditions ``hdot + alpha0 h >= 0``.  Pairwise
conditions couple two vehicles; the road-edge condition involves one.

Barriers (``D`` safety distance, ``T`` lookahead):

    h_ij = ||dp||^2 - D^2 + 2 T dp'dv          (dp = p_i - p_j, dv = v_i - v_j)
    h_i  = y_edge - p_y - T v sin(theta)

Both have relative degree one in ``(a, omega)`` through the velocity terms.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .centralized import solve_centralized
from .config import load_defaults
from .online import OnlineSolver, ParamSource
from .problem import AgentSpec, BoxDomain, CoupledProblem, CouplingConstraint, QuadraticObjective, eval_penalty

NOMINAL = "nominal"
CENTRALIZED = "centralized"
DECENTRALIZED = "decentralized"
MODES = (NOMINAL, CENTRALIZED, DECENTRALIZED)


class CbfError(RuntimeError):
    pass


@dataclass(frozen=True)
class DubinsState:
    px: float
    py: float
    theta: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py, self.theta, self.v], dtype=float)

    @classmethod
    def from_array(cls, s) -> "DubinsState":
        return cls(float(s[0]), float(s[1]), float(s[2]), float(s[3]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.px, self.py])

    @property
    def velocity(self) -> np.ndarray:
        return self.v * np.array([math.cos(self.theta), math.sin(self.theta)])


def drift(s: DubinsState) -> np.ndarray:
    """``f(x)``: the state derivative under zero input."""
    return np.array([s.v * math.cos(s.theta), s.v * math.sin(s.theta), 0.0, 0.0])


def input_matrix(s: DubinsState) -> np.ndarray:
    """``g(x)``: columns for ``a`` (drives ``v``) and ``omega`` (drives ``theta``)."""
    g = np.zeros((4, 2))
    g[3, 0] = 1.0
    g[2, 1] = 1.0
    return g


def dubins_flow(s: DubinsState, u) -> np.ndarray:
    """``(px', py', theta', v') = (v cos theta, v sin theta, omega, a)``."""
    u = np.asarray(u, dtype=float)
    return drift(s) + input_matrix(s) @ u


def rk4_step(s: DubinsState, u, dt: float, v_min: float = -math.inf, v_max: float = math.inf) -> DubinsState:
    """One RK4 step with the input held constant; the speed is clamped afterwards."""
    x = s.as_array()

    def f(z):
        return dubins_flow(DubinsState.from_array(z), u)

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    x[3] = min(max(x[3], v_min), v_max)
    return DubinsState.from_array(x)


# --- barriers ---------------------------------------------------------------

def pair_barrier(si: DubinsState, sj: DubinsState, D: float, T: float) -> Tuple[float, np.ndarray, np.ndarray]:
    """``h_ij`` and its gradients with respect to both states."""
    dp = si.position - sj.position
    dv = si.velocity - sj.velocity
    h = float(dp @ dp - D * D + 2.0 * T * dp @ dv)
    gp = 2.0 * dp + 2.0 * T * dv

    def grad(s, sign):
        heading = np.array([math.cos(s.theta), math.sin(s.theta)])
        normal = np.array([-math.sin(s.theta), math.cos(s.theta)])
        return np.array([sign * gp[0], sign * gp[1],
                         sign * 2.0 * T * s.v * (dp @ normal),
                         sign * 2.0 * T * (dp @ heading)])

    return h, grad(si, 1.0), grad(sj, -1.0)


def edge_barrier(s: DubinsState, y_edge: float, T: float) -> Tuple[float, np.ndarray]:
    """Road-edge barrier ``y_edge - py - T v sin(theta)`` and its gradient."""
    h = y_edge - s.py - T * s.v * math.sin(s.theta)
    return h, np.array([0.0, -1.0, -T * s.v * math.cos(s.theta), -T * math.sin(s.theta)])


PairBarrier = Callable[[DubinsState, DubinsState], Tuple[float, np.ndarray, np.ndarray]]
LocalBarrier = Callable[[DubinsState], Tuple[float, np.ndarray]]


def cbf_row(h: float, grads: Sequence[np.ndarray], states: Sequence[DubinsState],
            alpha0: float) -> Tuple[List[np.ndarray], float]:
    """Rearrange ``hdot + alpha0 h >= 0`` as ``sum_k A_k u_k <= b``.

    ``hdot = sum_k grad_k (f_k + g_k u_k)``, so ``A_k = -grad_k g_k`` and
    ``b = alpha0 h + sum_k grad_k f_k``.
    """
    blocks = [-(gk @ input_matrix(sk)) for gk, sk in zip(grads, states)]
    b = alpha0 * h + sum(float(gk @ drift(sk)) for gk, sk in zip(grads, states))
    return blocks, float(b)


# --- scene ------------------------------------------------------------------

@dataclass(frozen=True)
class InputBox:
    a_min: float = -6.0
    a_max: float = 3.0
    omega_min: float = -0.5
    omega_max: float = 0.5

    def domain(self) -> BoxDomain:
        return BoxDomain(np.array([self.a_min, self.omega_min]), np.array([self.a_max, self.omega_max]))

    def clip(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), [self.a_min, self.omega_min], [self.a_max, self.omega_max])


@dataclass(frozen=True)
class LaneFollower:
    """Constant-speed nominal controller tracking a polyline lane.

    The lane runs along heading ``ramp_angle`` through the origin for
    ``x < 0`` (zero for the main lane) and along the x axis afterwards.
    """

    v_ref: float
    ramp_angle: float = 0.0
    k_v: float = 1.0
    k_theta: float = 2.0
    k_y: float = 0.3

    def __call__(self, s: DubinsState, box: InputBox) -> np.ndarray:
        psi = self.ramp_angle if s.px < 0.0 else 0.0
        lateral = -math.sin(psi) * s.px + math.cos(psi) * s.py
        heading_err = math.atan2(math.sin(psi - s.theta), math.cos(psi - s.theta))
        omega = self.k_theta * heading_err - self.k_y * lateral
        a = self.k_v * (self.v_ref - s.v)
        return box.clip([a, omega])


@dataclass(frozen=True)
class Vehicle:
    state: DubinsState
    controller: Callable[[DubinsState, InputBox], np.ndarray]
    box: InputBox = InputBox()


@dataclass(frozen=True)
class CbfScene:
    vehicles: Tuple[Vehicle, ...]
    D: float = 5.0
    T: float = 0.5
    alpha0: float = 2.0
    threshold: float = 50.0
    detection_radius: float = 30.0
    y_edge: float = 2.5
    beta: float = 10.0
    M: int = 30
    dt: float = 0.05
    v_min: float = 0.0
    v_max: float = 20.0
    # "penalized": road-edge rows join the penalty as single-member couplings; "hard": exact local rows;
    # "off": no road-edge rows
    local_mode: str = "penalized"
    pair_barrier: Optional[PairBarrier] = None
    local_barrier: Optional[LocalBarrier] = None

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.local_mode not in ("penalized", "hard", "off"):
            raise ValueError(f"unknown local_mode {self.local_mode!r}")

    @property
    def states(self) -> Tuple[DubinsState, ...]:
        return tuple(v.state for v in self.vehicles)

    def with_states(self, states: Sequence[DubinsState]) -> "CbfScene":
        return replace(self, vehicles=tuple(replace(v, state=s) for v, s in zip(self.vehicles, states)))

    def pair(self, si: DubinsState, sj: DubinsState):
        if self.pair_barrier is not None:
            return self.pair_barrier(si, sj)
        return pair_barrier(si, sj, self.D, self.T)

    def local(self, s: DubinsState):
        if self.local_barrier is not None:
            return self.local_barrier(s)
        return edge_barrier(s, self.y_edge, self.T)

    def nominal_inputs(self) -> List[np.ndarray]:
        return [v.controller(v.state, v.box) for v in self.vehicles]


@dataclass(eq=False)
class CbfProblem:
    problem: CoupledProblem
    nominal: List[np.ndarray]
    # active pairs (i, j) with i < j and their barrier values
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    pair_h: List[float] = field(default_factory=list)
    local_h: List[float] = field(default_factory=list)


def _check_degree(blocks, what: str) -> None:
    if max(float(np.abs(b).max()) for b in blocks) <= 1e-12:
        raise CbfError(f"{what}: barrier gradient does not depend on the input (relative degree violated)")


def build_cbf_problem(scene: CbfScene) -> CbfProblem:
    """Minimum-intervention problem at the scene's current states.

    Pairs closer than ``detection_radius`` whose barrier value is at most
    ``threshold`` contribute one shared row each; road-edge rows are added
    per ``local_mode`` under the same threshold.
    """
    states = scene.states
    nominal = scene.nominal_inputs()
    hard: Dict[int, list] = {i: [] for i in range(len(states))}
    couplings: List[CouplingConstraint] = []
    pairs, pair_h, local_h = [], [], []
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            si, sj = states[i], states[j]
            if np.linalg.norm(si.position - sj.position) > scene.detection_radius:
                continue
            h, gi, gj = scene.pair(si, sj)
            if h > scene.threshold:
                continue
            (Ai, Aj), b = cbf_row(h, [gi, gj], [si, sj], scene.alpha0)
            _check_degree([Ai, Aj], f"pair ({i}, {j})")
            couplings.append(CouplingConstraint((i, j), {i: Ai[None, :], j: Aj[None, :]}, np.array([b])))
            pairs.append((i, j))
            pair_h.append(h)
    for i, s in enumerate(states):
        h, g = scene.local(s)
        local_h.append(h)
        if scene.local_mode == "off" or h > scene.threshold:
            continue
        (Ai,), b = cbf_row(h, [g], [s], scene.alpha0)
        _check_degree([Ai], f"vehicle {i} road edge")
        if scene.local_mode == "hard":
            hard[i].append((Ai, b))
        else:
            couplings.append(CouplingConstraint((i,), {i: Ai[None, :]}, np.array([b])))
    agents = []
    for i, veh in enumerate(scene.vehicles):
        u0 = nominal[i]
        obj = QuadraticObjective(2.0 * np.eye(2), -2.0 * u0, float(u0 @ u0))
        agents.append(AgentSpec(i, obj, veh.box.domain(), tuple(hard[i])))
    return CbfProblem(CoupledProblem(agents, couplings, scene.beta), nominal, pairs, pair_h, local_h)


def min_pair_barrier(scene: CbfScene) -> float:
    """Smallest ``h_ij`` over all pairs (not just the detected ones)."""
    states = scene.states
    vals = [scene.pair(states[i], states[j])[0] for i in range(len(states)) for j in range(i + 1, len(states))]
    return min(vals) if vals else math.inf


# --- simulation -------------------------------------------------------------

@dataclass(eq=False)
class SimStep:
    t: int
    states: List[DubinsState]
    inputs: np.ndarray  # (N, 2)
    min_h: float
    violation: float
    gap_bound: float = math.nan
    start_violation: float = math.nan
    end_violation: float = math.nan
    # oracle violation on the same problem (decentralized mode only)
    oracle_violation: float = math.nan
    active_pairs: int = 0


def simulate(scene: CbfScene, steps: int, mode: str = DECENTRALIZED, warm: bool = True,
             params: ParamSource = None, workers: Optional[int] = None,
             stop_tol: float = 1e-6) -> List[SimStep]:
    """Closed-loop run: build, solve per ``mode``, integrate with RK4 over ``dt``.

    The logged violation is ``1' max(0, A u - b)`` of the step's problem at
    the applied inputs.  In decentralized mode the oracle's violation on the
    same problem is logged too, so both can be compared state for state.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    solver = OnlineSolver(params, scene.M, warm, stop_tol, workers) if mode == DECENTRALIZED else None
    log: List[SimStep] = []
    for t in range(steps):
        built = build_cbf_problem(scene)
        prob = built.problem
        rec = None
        if mode == NOMINAL:
            u = np.concatenate(built.nominal)
        elif mode == CENTRALIZED:
            u = solve_centralized(prob).x
        else:
            rec = solver.step(prob)
            u = rec.decisions
        step = SimStep(t, list(scene.states), u.reshape(-1, 2).copy(), min_pair_barrier(scene),
                       eval_penalty(prob, u), active_pairs=len(built.pairs))
        if rec is not None:
            step.gap_bound = rec.gap_bound
            step.start_violation = rec.start_violation
            step.end_violation = rec.end_violation
            step.oracle_violation = eval_penalty(prob, solve_centralized(prob).x)
        log.append(step)
        new_states = [rk4_step(s, u[2 * i:2 * i + 2], scene.dt, scene.v_min, scene.v_max)
                      for i, s in enumerate(scene.states)]
        scene = scene.with_states(new_states)
    return log


def trajectory_csv_text(log: Sequence[SimStep], dt: float) -> str:
    """Columns: step, time, per vehicle state and input, min_h, violation, gap_bound, consensus violations."""
    n = len(log[0].states) if log else 0
    header = ["step", "time"]
    for i in range(n):
        header += [f"px{i}", f"py{i}", f"theta{i}", f"v{i}", f"a{i}", f"omega{i}"]
    header += ["min_h", "violation", "gap_bound", "start_violation", "end_violation", "oracle_violation",
               "active_pairs"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for s in log:
        row = [s.t, repr(s.t * dt)]
        for i in range(n):
            st = s.states[i]
            row += [repr(st.px), repr(st.py), repr(st.theta), repr(st.v),
                    repr(float(s.inputs[i, 0])), repr(float(s.inputs[i, 1]))]
        row += [repr(s.min_h), repr(s.violation), repr(s.gap_bound), repr(s.start_violation),
                repr(s.end_violation), repr(s.oracle_violation), s.active_pairs]
        w.writerow(row)
    return buf.getvalue()


# --- merging scenario -------------------------------------------------------

DEFAULT_MERGE = load_defaults()["merge"]


def merge_scene(cfg: Optional[dict] = None, rng: Optional[np.random.Generator] = None) -> CbfScene:
    """Two lanes meeting at the origin: main lane along +x, ramp from below.

    ``speed_jitter`` adds uniform noise to the initial speeds (needs ``rng``).
    """
    c = dict(DEFAULT_MERGE)
    c.update(cfg or {})
    phi = math.radians(c["ramp_angle_deg"])
    box = InputBox(*c["input_box"])
    vehicles = []

    def speed():
        if c["speed_jitter"] and rng is not None:
            return c["speed"] + rng.uniform(-c["speed_jitter"], c["speed_jitter"])
        return c["speed"]

    for d in c["main"]:
        vehicles.append(Vehicle(DubinsState(-d, 0.0, 0.0, speed()), LaneFollower(c["speed"], 0.0), box))
    for d in c["ramp"]:
        vehicles.append(Vehicle(DubinsState(-d * math.cos(phi), -d * math.sin(phi), phi, speed()),
                                LaneFollower(c["speed"], phi), box))
    return CbfScene(tuple(vehicles), D=c["D"], T=c["T"], alpha0=c["alpha0"], threshold=c["threshold"],
                    detection_radius=c["detection_radius"], y_edge=c["y_edge"], beta=c["beta"], M=int(c["M"]),
                    dt=c["dt"], v_min=c["v_range"][0], v_max=c["v_range"][1], local_mode=c["local_mode"])
