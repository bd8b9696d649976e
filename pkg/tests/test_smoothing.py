import math

import numpy as np
import pytest

from conftest import two_scalar_problem
from oracles import central_difference
from proxjadmm.centralized import solve_centralized
from proxjadmm.coordinator import run_admm, select_params, snapshot_for
from proxjadmm.generators import random_pairwise_problem
from proxjadmm.local import LocalSubproblem
from proxjadmm.problem import AgentSpec, BoxDomain, CoupledProblem, LocalBlock, QuadraticObjective
from proxjadmm.qp import QpInstance, solve_qp
from proxjadmm.smoothing import (SmoothingConfig, SmoothingError, eval_smoothed_total, minimize_smoothed,
                                 smoothed_penalty, smoothed_total_penalty, smoothing_gap_bound, softplus_penalty,
                                 solve_smoothed, solve_smoothed_centralized)


def test_zero_argument_gives_log2():
    v, g = softplus_penalty(np.zeros(3), np.array([0.5, 0.5, 1.0]), 10.0, 4.0)
    assert v == pytest.approx(10.0 / 4.0 * 2.0 * math.log(2.0))
    np.testing.assert_allclose(g, 10.0 * np.array([0.5, 0.5, 1.0]) * 0.5)


def test_limits_and_overflow_safety():
    w = np.array([0.5])
    v, _ = softplus_penalty(np.array([-100.0]), w, 10.0, 10.0)
    assert 0.0 <= v < 1e-300 or v == 0.0
    for z in (10.0, 1e3, 1e6):
        v, g = softplus_penalty(np.array([z]), w, 10.0, 10.0)
        assert math.isfinite(v)
        assert v == pytest.approx(10.0 * 0.5 * z, rel=1e-12)
        assert g[0] == pytest.approx(5.0)


def test_sandwich_and_monotone_in_c():
    rng = np.random.default_rng(40)
    p = random_pairwise_problem(6, rng, rows=(1, 3), triple_fraction=0.3)
    for _ in range(200):
        i = p.ids[int(rng.integers(len(p.ids)))]
        v = p.view(i)
        blk = LocalBlock.from_flat(v, rng.normal(scale=3.0, size=v.size))
        exact = v.penalty(blk.flat())
        prev = math.inf
        for c in (0.5, 1.0, 10.0, 100.0):
            s, _ = smoothed_penalty(v, blk, SmoothingConfig(c))
            assert -1e-12 <= s - exact <= smoothing_gap_bound(v.weights, v.beta, c) + 1e-12
            assert s <= prev + 1e-12
            prev = s


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(41)
    p = random_pairwise_problem(5, rng, rows=(1, 2), triple_fraction=0.3)
    for k in range(100):
        i = p.ids[k % len(p.ids)]
        v = p.view(i)
        cfg = SmoothingConfig(float(rng.choice([1.0, 10.0])))
        x = rng.normal(scale=1.0, size=v.size)
        f = lambda z: smoothed_penalty(v, LocalBlock.from_flat(v, z), cfg)[0]
        _, g = smoothed_penalty(v, LocalBlock.from_flat(v, x), cfg)
        fd = central_difference(f, x, 1e-6)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(fd), 1.0)


def test_total_penalty_gradient():
    rng = np.random.default_rng(42)
    p = random_pairwise_problem(4, rng)
    cfg = SmoothingConfig(3.0)
    x = rng.normal(size=p.dim)
    _, g = smoothed_total_penalty(p, x, cfg)
    fd = central_difference(lambda z: smoothed_total_penalty(p, z, cfg)[0], x)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6)


def test_large_c_matches_exact_penalty_qp():
    rng = np.random.default_rng(43)
    for _ in range(5):
        p = random_pairwise_problem(5, rng, dims=(1, 3), feasible=True)
        exact = solve_centralized(p).x
        smooth = solve_smoothed_centralized(p, SmoothingConfig(1e4)).z
        np.testing.assert_allclose(smooth, exact, atol=1e-3)


def test_no_rows_equals_quadratic_minimizer():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([-3.0, 4.0])
    lo, up = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    sol = minimize_smoothed(H, g, np.zeros((0, 2)), np.zeros(0), np.zeros(0), 10.0, 10.0, lo, up)
    ref = solve_qp(QpInstance(H, g, lower=lo, upper=up))
    np.testing.assert_allclose(sol.z, ref.z, atol=1e-8)


def test_smoothed_minimizer_beats_perturbations():
    rng = np.random.default_rng(44)
    p = random_pairwise_problem(6, rng, dims=(1, 3), rows=(1, 2))
    cfg = SmoothingConfig(10.0)
    sol = solve_smoothed_centralized(p, cfg)
    lo = np.concatenate([a.domain.lower for a in p.agents])
    up = np.concatenate([a.domain.upper for a in p.agents])
    best = eval_smoothed_total(p, sol.z, cfg)
    for _ in range(100):
        x = np.clip(sol.z + rng.normal(scale=0.1, size=p.dim), lo, up)
        assert best <= eval_smoothed_total(p, x, cfg) + 1e-10


def test_local_smoothed_solve_is_minimizer_of_augmented_objective():
    rng = np.random.default_rng(45)
    p = random_pairwise_problem(5, rng, dims=(1, 2), rows=(1, 2))
    params = select_params(p, mode="practical")
    state = run_admm(p, params, max_iter=3, stop_tol=0.0)
    cfg = SmoothingConfig(10.0)
    for i in p.ids:
        v = p.view(i)
        snap = snapshot_for(p, i, state.blocks, state.duals)
        sub = LocalSubproblem(p.agent(i), v, params, with_prox=True)
        out = solve_smoothed(p.agent(i), v, cfg, params, state.blocks[i], snap, with_prox=True)

        def obj(flat):
            blk = LocalBlock.from_flat(v, flat)
            return (sub.objective(blk, state.blocks[i], snap) - v.penalty(flat)
                    + smoothed_penalty(v, blk, cfg)[0])

        lo = sub.lower[:sub.nb]
        up = sub.upper[:sub.nb]
        base = obj(out.flat())
        for _ in range(100):
            z = np.clip(out.flat() + rng.normal(scale=0.05, size=v.size), lo, up)
            assert base <= obj(z) + 1e-10


def test_isolated_agent_smoothed_solve():
    a = AgentSpec(0, QuadraticObjective(np.eye(1), [-3.0]), BoxDomain([-1.0], [1.0]))
    p = CoupledProblem([a], [], 1.0)
    out = solve_smoothed(a, p.view(0), SmoothingConfig())
    np.testing.assert_allclose(out.own, [1.0], atol=1e-9)


def test_rejections():
    with pytest.raises(ValueError):
        SmoothingConfig(0.0)
    with pytest.raises(ValueError):
        SmoothingConfig(math.inf)
    a = AgentSpec(0, QuadraticObjective(np.eye(1), [0.0]), BoxDomain([-1.0], [1.0]), (([1.0], 0.5),))
    p = CoupledProblem([a], [], 1.0)
    with pytest.raises(ValueError):
        solve_smoothed(a, p.view(0), SmoothingConfig())
    with pytest.raises(ValueError):
        solve_smoothed_centralized(p, SmoothingConfig())
    q = two_scalar_problem()
    with pytest.raises(ValueError):
        solve_smoothed(q.agent(1), q.view(1), SmoothingConfig())


def test_newton_reports_nonconvergence():
    with pytest.raises(SmoothingError):
        minimize_smoothed(np.eye(2), np.array([1e3, -1e3]), np.array([[1.0, 1.0]]), np.zeros(1), np.ones(1),
                          10.0, 10.0, max_iter=0)
