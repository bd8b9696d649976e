"""Seeded random instances for experiments and tests.

Pairwise instances (``random_pairwise_problem``):

* agent ``i`` has dimension drawn uniformly from ``dims`` and objective
  ``0.5 x'Qx + q'x`` with ``Q = B B'/n + q_floor I`` (``B`` standard normal)
  and ``q ~ N(0, 2^2)``;
* the coupling graph is a ring (a single edge for two agents) plus
  ``round(chord_ratio * N)`` random chords, so the mean degree stays bounded
  as ``N`` grows;
* each edge carries ``rows`` coupling rows with standard normal blocks; the
  right-hand side is ``A x_u + u * ||A_row||`` where ``x_u`` is the
  unconstrained minimizer and ``u ~ U(slack_range)``, so most rows are
  violated at ``x_u`` and bind at the optimum;
* optionally, a fraction of three-agent couplings;
* domains are boxes ``[-box, box]`` (``box=None`` for unbounded).
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .problem import AgentSpec, BoxDomain, CoupledProblem, CouplingConstraint, QuadraticObjective

IntRange = Union[int, Tuple[int, int]]


def _draw(rng: np.random.Generator, r: IntRange) -> int:
    if isinstance(r, int):
        return r
    return int(rng.integers(r[0], r[1] + 1))


def random_agents(num_agents: int, rng: np.random.Generator, dims: IntRange = 2, box: Optional[float] = 5.0,
                  q_floor: float = 1.0) -> List[AgentSpec]:
    agents = []
    for i in range(num_agents):
        n = _draw(rng, dims)
        B = rng.normal(size=(n, n))
        Q = B @ B.T / n + q_floor * np.eye(n)
        q = 2.0 * rng.normal(size=n)
        dom = BoxDomain(np.full(n, -box), np.full(n, box)) if box is not None else None
        agents.append(AgentSpec(i, QuadraticObjective(Q, q), dom))
    return agents


def random_edges(num_agents: int, rng: np.random.Generator, chord_ratio: float = 0.5) -> List[Tuple[int, int]]:
    if num_agents < 2:
        return []
    if num_agents == 2:
        return [(0, 1)]
    edges = {(i, (i + 1) % num_agents) for i in range(num_agents)}
    edges = {tuple(sorted(e)) for e in edges}
    target = len(edges) + int(round(chord_ratio * num_agents))
    possible = num_agents * (num_agents - 1) // 2
    while len(edges) < min(target, possible):
        i, j = rng.choice(num_agents, size=2, replace=False)
        edges.add((int(min(i, j)), int(max(i, j))))
    return sorted(edges)


def redraw_coupling(members: Sequence[int], agents: Sequence[AgentSpec], centers: Dict[int, np.ndarray], rows: int,
                    rng: np.random.Generator, slack_range: Tuple[float, float] = (-1.0, 0.3)) -> CouplingConstraint:
    blocks = {i: rng.normal(size=(rows, agents[i].dim)) for i in members}
    Ax = sum(blocks[i] @ centers[i] for i in members)
    norms = np.sqrt(sum(np.sum(blocks[i] ** 2, axis=1) for i in members))
    rhs = Ax + rng.uniform(*slack_range, size=rows) * norms
    return CouplingConstraint(tuple(members), blocks, rhs)


def random_pairwise_problem(num_agents: int, rng: np.random.Generator, dims: IntRange = 2,
                            rows: IntRange = 1, beta: float = 10.0, box: Optional[float] = 5.0,
                            chord_ratio: float = 0.5, triple_fraction: float = 0.0,
                            slack_range: Tuple[float, float] = (-1.0, 0.3),
                            feasible: bool = False) -> CoupledProblem:
    """Random coupled instance; see the module docstring for the distribution.

    With ``feasible=True`` the right-hand sides are built around a random
    point inside the boxes (``slack_range`` then shifts ``b`` upwards only),
    so the hard-constrained problem has a strictly feasible point.
    """
    agents = random_agents(num_agents, rng, dims, box)
    if feasible:
        half = 0.5 * (box if box is not None else 1.0)
        centers = {a.id: rng.uniform(-half, half, size=a.dim) for a in agents}
        slack_range = (0.05, 0.5)
    else:
        centers = {a.id: np.linalg.solve(a.objective.Q, -a.objective.q) for a in agents}
    couplings = [redraw_coupling(e, agents, centers, _draw(rng, rows), rng, slack_range)
                 for e in random_edges(num_agents, rng, chord_ratio)]
    if num_agents >= 3 and triple_fraction > 0:
        for _ in range(int(np.ceil(triple_fraction * num_agents))):
            members = sorted(int(v) for v in rng.choice(num_agents, size=3, replace=False))
            couplings.append(redraw_coupling(members, agents, centers, _draw(rng, rows), rng, slack_range))
    return CoupledProblem(agents, couplings, beta)


def perturbed(problem: CoupledProblem, rng: np.random.Generator, scale: float,
              objective: bool = True, constraints: bool = True) -> CoupledProblem:
    """Same structure with Gaussian perturbations of ``q``, ``A_s`` and ``b_s``.

    ``Q`` is perturbed by a symmetric term small enough to stay positive definite.
    """
    agents = []
    for a in problem.agents:
        Q, q = a.objective.Q, a.objective.q
        if objective:
            E = rng.normal(size=Q.shape)
            E = 0.5 * (E + E.T)
            E *= min(scale, 0.5 * a.objective.sigma / max(np.linalg.norm(E, 2), 1e-12))
            Q = Q + E
            q = q + scale * rng.normal(size=q.size)
        agents.append(AgentSpec(a.id, QuadraticObjective(Q, q, a.objective.c0), a.domain, a.local_hard_constraints))
    couplings = []
    for c in problem.couplings:
        if constraints:
            blocks = {i: c.blocks[i] + scale * rng.normal(size=c.blocks[i].shape) for i in c.members}
            rhs = c.rhs + scale * rng.normal(size=c.rhs.size)
        else:
            blocks, rhs = c.blocks, c.rhs
        couplings.append(CouplingConstraint(c.members, blocks, rhs))
    return CoupledProblem(agents, couplings, problem.beta)
