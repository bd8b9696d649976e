"""Independent reference computations used by the tests.

Nothing here calls the package's solvers: QPs are solved by enumerating
active sets, penalties are recomputed row by row, gradients are taken by
central differences.
"""

from __future__ import annotations

import itertools

import numpy as np


def qp_rows(H, g, G=None, h=None, lower=None, upper=None):
    """Fold bounds into ``C z <= d``."""
    n = len(g)
    C = [np.zeros((0, n))]
    d = [np.zeros(0)]
    if G is not None and len(G):
        C.append(np.asarray(G, dtype=float))
        d.append(np.asarray(h, dtype=float))
    eye = np.eye(n)
    if upper is not None:
        fin = np.isfinite(upper)
        C.append(eye[fin])
        d.append(np.asarray(upper)[fin])
    if lower is not None:
        fin = np.isfinite(lower)
        C.append(-eye[fin])
        d.append(-np.asarray(lower)[fin])
    return np.vstack(C), np.concatenate(d)


def enumerate_qp(H, g, G=None, h=None, lower=None, upper=None, tol=1e-9):
    """Strictly convex QP by trying every active set; returns ``(z, lam)`` or ``None`` if infeasible.

    For each subset ``S`` with linearly independent rows the equality
    system is solved; the KKT point is the one with ``C z <= d`` and
    ``lam_S >= 0``.  Among several (degenerate ties) the smallest
    objective wins.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    C, d = qp_rows(H, g, G, h, lower, upper)
    n, m = g.size, d.size
    best = None
    for k in range(0, min(n, m) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            A = C[S]
            if k and np.linalg.matrix_rank(A) < k:
                continue
            K = np.block([[H, A.T], [A, np.zeros((k, k))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-g, d[S]]))
            except np.linalg.LinAlgError:
                continue
            z, lam_s = sol[:n], sol[n:]
            if np.any(lam_s < -tol) or np.any(C @ z - d > tol * max(1.0, np.abs(d).max(initial=0))):
                continue
            val = 0.5 * z @ H @ z + g @ z
            if best is None or val < best[2] - 1e-12:
                lam = np.zeros(m)
                lam[S] = lam_s
                best = (z, lam, val)
    return None if best is None else best[:2]


def penalty_by_rows(problem, x):
    """``1' max(0, A x - b)`` accumulated one scalar row at a time."""
    parts = problem.split(x)
    total = 0.0
    for c in problem.couplings:
        for r in range(c.rows):
            s = -c.rhs[r]
            for i in c.members:
                for k in range(problem.agent(i).dim):
                    s += c.blocks[i][r, k] * parts[i][k]
            total += max(0.0, s)
    return total


def central_difference(f, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        grad[k] = (f(x + e) - f(x - e)) / (2 * step)
    return grad


def consensus_matrix_block(problem, agent):
    """Columns of agent ``agent``'s local block in the stacked consensus system.

    One row group per directed pair ``(i, j)`` encoding ``x_j^i - x_j = 0``;
    the returned matrix has a column per entry of the agent's block.
    """
    view = problem.view(agent)
    sl = view.slices()
    pairs = problem.directed_pairs()
    rows = []
    for i, j in pairs:
        dj = problem.agent(j).dim
        block = np.zeros((dj, view.size))
        if i == agent:
            block[:, sl[j]] = np.eye(dj)
        if j == agent:
            block[:, sl[agent]] = -np.eye(dj)
        rows.append(block)
    return np.vstack(rows) if rows else np.zeros((0, view.size))


def lift_to_box(x, lower, upper):
    return np.minimum(np.maximum(x, lower), upper)
