"""Data model for agents coupled by linear inequality constraints.

A :class:`CoupledProblem` holds the agents (each with a strongly convex
quadratic objective and a box domain), the coupling rows and the violation
penalty ``beta``.  Each agent solves over a :class:`LocalBlock`, i.e. its own
decision followed by copies of its neighbors' decisions (sorted by neighbor
id), and sees the coupling rows through a :class:`LocalConstraintView`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

AgentId = Hashable

SCHEMA_VERSION = 1


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def _as_matrix(m, name: str, cols: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 1 and cols is not None:
        arr = arr.reshape(-1, cols)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``f(x) = 0.5 x'Qx + q'x + c0`` with ``Q`` symmetric positive definite."""

    Q: np.ndarray
    q: np.ndarray
    c0: float = 0.0

    def __post_init__(self):
        q = _as_vector(self.q, "q")
        Q = _as_matrix(self.Q, "Q", cols=q.size)
        if Q.shape != (q.size, q.size):
            raise ValueError(f"Q has shape {Q.shape}, expected {(q.size, q.size)}")
        if not np.allclose(Q, Q.T, rtol=1e-12, atol=1e-12):
            raise ValueError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        if eig[0] <= 0.0:
            raise ValueError(f"Q must be positive definite (smallest eigenvalue {eig[0]:.3g})")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "c0", float(self.c0))
        object.__setattr__(self, "_eig", (float(eig[0]), float(eig[-1])))

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def sigma(self) -> float:
        """Strong convexity parameter (smallest eigenvalue of ``Q``)."""
        return self._eig[0]

    @property
    def nu(self) -> float:
        """Lipschitz constant of the gradient (largest eigenvalue of ``Q``).

        Only reported for diagnostics; none of the bounds use it.
        """
        return self._eig[1]

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.q @ x + self.c0)

    def gradient(self, x) -> np.ndarray:
        return self.Q @ np.asarray(x, dtype=float) + self.q


@dataclass(frozen=True, eq=False)
class BoxDomain:
    """Elementwise bounds; infinite entries mean the bound is absent."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.lower, "lower")
        up = _as_vector(self.upper, "upper")
        if lo.shape != up.shape:
            raise ValueError("lower and upper must have the same length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(up)):
            raise ValueError("bounds must not be NaN")
        if np.any(lo >= up):
            raise ValueError("box domain must have a nonempty interior (lower < upper)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def unbounded(cls, dim: int) -> "BoxDomain":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class AgentSpec:
    id: AgentId
    objective: QuadraticObjective
    domain: Optional[BoxDomain] = None
    # rows (a, b) meaning a @ x_i <= b, enforced exactly
    local_hard_constraints: Tuple[Tuple[np.ndarray, float], ...] = ()

    def __post_init__(self):
        dom = self.domain if self.domain is not None else BoxDomain.unbounded(self.objective.dim)
        if dom.dim != self.objective.dim:
            raise ValueError(f"agent {self.id!r}: domain has dim {dom.dim}, objective has {self.objective.dim}")
        hard = []
        for a, b in self.local_hard_constraints:
            a = _as_vector(a, "hard constraint row")
            if a.size != self.objective.dim:
                raise ValueError(f"agent {self.id!r}: hard constraint row has wrong length")
            hard.append((a, float(b)))
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "local_hard_constraints", tuple(hard))

    @property
    def dim(self) -> int:
        return self.objective.dim

    def hard_rows(self) -> Tuple[np.ndarray, np.ndarray]:
        """Hard constraints stacked as ``(G, h)``; ``G`` may have zero rows."""
        if not self.local_hard_constraints:
            return np.zeros((0, self.dim)), np.zeros(0)
        G = np.vstack([a for a, _ in self.local_hard_constraints])
        h = np.array([b for _, b in self.local_hard_constraints])
        return G, h


@dataclass(frozen=True, eq=False)
class CouplingConstraint:
    """``sum_{i in members} blocks[i] @ x_i <= rhs``.

    A single-member constraint is allowed; it acts as a penalized local row
    carrying the full weight ``beta``.
    """

    members: Tuple[AgentId, ...]
    blocks: Mapping[AgentId, np.ndarray]
    rhs: np.ndarray

    def __post_init__(self):
        members = tuple(sorted(self.members))
        if len(members) < 1:
            raise ValueError("coupling constraint needs at least one member")
        if len(set(members)) != len(members):
            raise ValueError("duplicate members in coupling constraint")
        rhs = _as_vector(self.rhs, "rhs")
        if set(self.blocks) != set(members):
            raise ValueError("blocks must be keyed exactly by the members")
        blocks = {}
        for i in members:
            blk = np.asarray(self.blocks[i], dtype=float)
            if blk.ndim == 1:
                blk = blk.reshape(rhs.size, -1)
            if blk.ndim != 2 or blk.shape[0] != rhs.size:
                raise ValueError(f"block for member {i!r} must have {rhs.size} rows")
            blocks[i] = blk
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "rhs", rhs)

    @property
    def rows(self) -> int:
        return self.rhs.size

    def residual(self, decisions: Mapping[AgentId, np.ndarray]) -> np.ndarray:
        """``sum_i A_s^i x_i - b_s`` for the given decisions."""
        r = -self.rhs.copy()
        for i in self.members:
            r += self.blocks[i] @ decisions[i]
        return r


@dataclass(frozen=True, eq=False)
class LocalConstraintView:
    """Coupling rows touching one agent, rewritten over its local block.

    ``layout`` lists the block's agents (owner first, then neighbors sorted)
    and ``dims`` their sizes.  ``sources`` gives, per row, the index of the
    originating coupling and the row within it.
    """

    owner: AgentId
    layout: Tuple[AgentId, ...]
    dims: Tuple[int, ...]
    rows: np.ndarray
    rhs: np.ndarray
    weights: np.ndarray
    member_sets: Tuple[Tuple[AgentId, ...], ...]
    sources: Tuple[Tuple[int, int], ...]
    beta: float

    @property
    def size(self) -> int:
        return int(sum(self.dims))

    @property
    def num_rows(self) -> int:
        return self.rhs.size

    def slices(self) -> Dict[AgentId, slice]:
        out, start = {}, 0
        for aid, d in zip(self.layout, self.dims):
            out[aid] = slice(start, start + d)
            start += d
        return out

    def penalty(self, flat: np.ndarray) -> float:
        """``beta * w' max(0, A x - b)`` at a flattened block."""
        if self.num_rows == 0:
            return 0.0
        return float(self.beta * self.weights @ np.maximum(0.0, self.rows @ flat - self.rhs))


@dataclass(eq=False)
class LocalBlock:
    """An agent's decision together with its copies of the neighbors' decisions."""

    owner: AgentId
    own: np.ndarray
    copies: Dict[AgentId, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.own = np.asarray(self.own, dtype=float)
        self.copies = {j: np.asarray(self.copies[j], dtype=float) for j in sorted(self.copies)}

    @property
    def layout(self) -> Tuple[AgentId, ...]:
        return (self.owner,) + tuple(self.copies)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.own] + list(self.copies.values())) if self.copies else self.own.copy()

    def copy(self) -> "LocalBlock":
        return LocalBlock(self.owner, self.own.copy(), {j: v.copy() for j, v in self.copies.items()})

    @classmethod
    def from_flat(cls, view: LocalConstraintView, flat: np.ndarray) -> "LocalBlock":
        sl = view.slices()
        flat = np.asarray(flat, dtype=float)
        if flat.size != view.size:
            raise ValueError(f"flat vector has length {flat.size}, view expects {view.size}")
        return cls(view.owner, flat[sl[view.owner]].copy(),
                   {j: flat[sl[j]].copy() for j in view.layout[1:]})

    def check_layout(self, view: LocalConstraintView) -> None:
        if self.layout != view.layout:
            raise ValueError(f"block layout {self.layout} does not match view layout {view.layout}")
        for aid, d in zip(view.layout, view.dims):
            v = self.own if aid == self.owner else self.copies[aid]
            if v.size != d:
                raise ValueError(f"block entry for {aid!r} has length {v.size}, expected {d}")


class CoupledProblem:
    """Agents, coupling constraints and the violation penalty ``beta``.

    Immutable after construction; the neighbor relation, joint layout and
    per-agent views are derived once.
    """

    def __init__(self, agents: Sequence[AgentSpec], couplings: Sequence[CouplingConstraint] = (),
                 beta: float = 10.0):
        self.agents: Tuple[AgentSpec, ...] = tuple(agents)
        self.couplings: Tuple[CouplingConstraint, ...] = tuple(couplings)
        self.beta = float(beta)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        self.index: Dict[AgentId, int] = {aid: k for k, aid in enumerate(ids)}
        self.ids: Tuple[AgentId, ...] = tuple(ids)
        offsets = np.concatenate([[0], np.cumsum([a.dim for a in self.agents])]).astype(int)
        self._offsets = offsets
        nbrs: Dict[AgentId, set] = {aid: set() for aid in ids}
        for c in self.couplings:
            for i in c.members:
                if i not in self.index:
                    raise ValueError(f"coupling references unknown agent {i!r}")
                if c.blocks[i].shape[1] != self.agent(i).dim:
                    raise ValueError(f"coupling block for {i!r} has {c.blocks[i].shape[1]} columns, "
                                     f"agent dim is {self.agent(i).dim}")
                nbrs[i].update(j for j in c.members if j != i)
        self.neighbors: Dict[AgentId, Tuple[AgentId, ...]] = {i: tuple(sorted(v)) for i, v in nbrs.items()}
        self._views: Dict[AgentId, LocalConstraintView] = {}

    def __repr__(self):
        return (f"CoupledProblem(agents={len(self.agents)}, couplings={len(self.couplings)}, "
                f"rows={self.num_rows}, beta={self.beta})")

    def agent(self, aid: AgentId) -> AgentSpec:
        try:
            return self.agents[self.index[aid]]
        except KeyError:
            raise KeyError(f"unknown agent id {aid!r}") from None

    @property
    def dim(self) -> int:
        return int(self._offsets[-1])

    @property
    def num_rows(self) -> int:
        return int(sum(c.rows for c in self.couplings))

    @property
    def sigma(self) -> float:
        return min(a.objective.sigma for a in self.agents)

    @property
    def max_members(self) -> int:
        return max((len(c.members) for c in self.couplings), default=0)

    def directed_pairs(self) -> List[Tuple[AgentId, AgentId]]:
        """``(i, j)`` for every agent ``i`` and neighbor ``j``, in layout order."""
        return [(i, j) for i in self.ids for j in self.neighbors[i]]

    def agent_slice(self, aid: AgentId) -> slice:
        k = self.index[aid]
        return slice(int(self._offsets[k]), int(self._offsets[k + 1]))

    def split(self, x) -> Dict[AgentId, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"joint vector has shape {x.shape}, expected ({self.dim},)")
        return {aid: x[self.agent_slice(aid)] for aid in self.ids}

    def join(self, parts: Mapping[AgentId, np.ndarray]) -> np.ndarray:
        if not self.agents:
            return np.zeros(0)
        return np.concatenate([np.asarray(parts[aid], dtype=float) for aid in self.ids])

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        """The compact coupling system ``(A, b)`` over the joint vector."""
        A = np.zeros((self.num_rows, self.dim))
        b = np.zeros(self.num_rows)
        r = 0
        for c in self.couplings:
            for i in c.members:
                A[r:r + c.rows, self.agent_slice(i)] = c.blocks[i]
            b[r:r + c.rows] = c.rhs
            r += c.rows
        return A, b

    def row_weights(self) -> np.ndarray:
        """Per row of :meth:`stacked`, the member count of its coupling."""
        return np.concatenate([np.full(c.rows, len(c.members), dtype=float) for c in self.couplings]) \
            if self.couplings else np.zeros(0)

    def view(self, aid: AgentId) -> LocalConstraintView:
        if aid not in self._views:
            self._views[aid] = build_local_view(self, aid)
        return self._views[aid]

    def same_structure(self, other: "CoupledProblem") -> bool:
        """True when agent ids, dims and coupling member sets/row counts agree."""
        if self.ids != other.ids or [a.dim for a in self.agents] != [a.dim for a in other.agents]:
            return False
        if len(self.couplings) != len(other.couplings):
            return False
        return all(c.members == d.members and c.rows == d.rows
                   for c, d in zip(self.couplings, other.couplings))


def build_local_view(problem: CoupledProblem, agent: AgentId) -> LocalConstraintView:
    """Stack every coupling row that involves ``agent`` over its local block layout.

    The owner's columns take ``A_s^i``; the columns of each neighbor copy take
    ``A_s^j``.  Row ``r`` is weighted by ``1/|s|`` of its coupling.
    """
    spec = problem.agent(agent)
    layout = (agent,) + problem.neighbors[agent]
    dims = tuple(problem.agent(j).dim for j in layout)
    offsets = dict(zip(layout, np.concatenate([[0], np.cumsum(dims)[:-1]]).astype(int)))
    size = int(sum(dims))
    rows, rhs, weights, member_sets, sources = [], [], [], [], []
    for ci, c in enumerate(problem.couplings):
        if agent not in c.members:
            continue
        block = np.zeros((c.rows, size))
        for j in c.members:
            o = offsets[j]
            block[:, o:o + problem.agent(j).dim] = c.blocks[j]
        rows.append(block)
        rhs.append(c.rhs)
        weights.append(np.full(c.rows, 1.0 / len(c.members)))
        member_sets.extend([c.members] * c.rows)
        sources.extend((ci, r) for r in range(c.rows))
    return LocalConstraintView(
        owner=agent,
        layout=layout,
        dims=dims,
        rows=np.vstack(rows) if rows else np.zeros((0, size)),
        rhs=np.concatenate(rhs) if rhs else np.zeros(0),
        weights=np.concatenate(weights) if weights else np.zeros(0),
        member_sets=tuple(member_sets),
        sources=tuple(sources),
        beta=problem.beta,
    )


def eval_penalty(problem: CoupledProblem, x) -> float:
    """Total violation ``1' max(0, A x - b)`` (without the ``beta`` factor)."""
    parts = problem.split(x)
    total = 0.0
    for c in problem.couplings:
        total += float(np.sum(np.maximum(0.0, c.residual(parts))))
    return total


def eval_total_objective(problem: CoupledProblem, x) -> float:
    """``F(x) = sum_i f_i(x_i) + beta * 1' max(0, A x - b)``."""
    parts = problem.split(x)
    value = sum(a.objective(parts[a.id]) for a in problem.agents)
    return float(value + problem.beta * eval_penalty(problem, x))


def eval_local_objective(view: LocalConstraintView, objective: QuadraticObjective, block: LocalBlock) -> float:
    """Augmented local objective ``f_i(x_i) + beta * w' max(0, A^i x_i - b^i)``."""
    block.check_layout(view)
    return objective(block.own) + view.penalty(block.flat())


def true_blocks(problem: CoupledProblem, x) -> Dict[AgentId, LocalBlock]:
    """Blocks whose copies hold the actual neighbor decisions."""
    parts = problem.split(x)
    return {i: LocalBlock(i, parts[i].copy(), {j: parts[j].copy() for j in problem.neighbors[i]})
            for i in problem.ids}


def consensus_violation(problem: CoupledProblem, blocks: Mapping[AgentId, LocalBlock]) -> float:
    """``sum_{i, j in N_i} ||x_j^i - x_j||`` accumulated in layout order."""
    total = 0.0
    for i, j in problem.directed_pairs():
        total += float(np.linalg.norm(blocks[i].copies[j] - blocks[j].own))
    return total


# --- JSON round trip -------------------------------------------------------

def problem_to_dict(problem: CoupledProblem) -> dict:
    """Serialize to plain JSON types.  Matrices are stored row-major as nested lists."""
    agents = []
    for a in problem.agents:
        entry = {
            "id": a.id,
            "Q": a.objective.Q.tolist(),
            "q": a.objective.q.tolist(),
            "c0": a.objective.c0,
            "lower": [_encode_float(e) for e in a.domain.lower],
            "upper": [_encode_float(e) for e in a.domain.upper],
        }
        if a.local_hard_constraints:
            entry["hard"] = [{"row": r.tolist(), "rhs": b} for r, b in a.local_hard_constraints]
        agents.append(entry)
    couplings = [{
        "members": list(c.members),
        "blocks": [c.blocks[i].tolist() for i in c.members],
        "rhs": c.rhs.tolist(),
    } for c in problem.couplings]
    return {"schema": SCHEMA_VERSION, "beta": problem.beta, "agents": agents, "couplings": couplings}


def _encode_float(v: float):
    if np.isposinf(v):
        return "inf"
    if np.isneginf(v):
        return "-inf"
    return float(v)


def _decode_float(v) -> float:
    return float(v)


def problem_from_dict(data: dict) -> CoupledProblem:
    schema = data.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ValueError(f"unsupported problem schema {schema!r}")
    agents = []
    for e in data["agents"]:
        q = np.asarray(e["q"], dtype=float)
        obj = QuadraticObjective(np.asarray(e["Q"], dtype=float).reshape(q.size, q.size), q, e.get("c0", 0.0))
        lower = e.get("lower")
        upper = e.get("upper")
        dom = BoxDomain(
            np.array([_decode_float(v) for v in lower]) if lower is not None else np.full(q.size, -np.inf),
            np.array([_decode_float(v) for v in upper]) if upper is not None else np.full(q.size, np.inf),
        )
        hard = tuple((np.asarray(h["row"], dtype=float), float(h["rhs"])) for h in e.get("hard", ()))
        agents.append(AgentSpec(_decode_id(e["id"]), obj, dom, hard))
    couplings = []
    for c in data.get("couplings", ()):
        members = [_decode_id(m) for m in c["members"]]
        rhs = np.asarray(c["rhs"], dtype=float).reshape(-1)
        blocks = {m: np.asarray(b, dtype=float).reshape(rhs.size, -1) for m, b in zip(members, c["blocks"])}
        couplings.append(CouplingConstraint(tuple(members), blocks, rhs))
    return CoupledProblem(agents, couplings, data["beta"])


def _decode_id(v):
    return v if isinstance(v, (int, str)) else str(v)


def save_problem(problem: CoupledProblem, path: Union[str, Path]) -> None:
    # repr-exact floats: json writes the shortest round-tripping representation
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=1))


def load_problem(path: Union[str, Path]) -> CoupledProblem:
    return problem_from_dict(json.loads(Path(path).read_text()))
