import numpy as np
import pytest

from conftest import two_scalar_problem
from oracles import enumerate_qp
from proxjadmm.centralized import solve_centralized
from proxjadmm.coordinator import IterationState, run_admm, select_params, snapshot_for
from proxjadmm.generators import random_pairwise_problem
from proxjadmm.local import (LocalSolveError, LocalSubproblem, NeighborSnapshot, ProxParams, local_mismatch,
                             primal_update)
from proxjadmm.online import consensus_duals
from proxjadmm.problem import AgentSpec, BoxDomain, CoupledProblem, LocalBlock, QuadraticObjective, true_blocks

EMPTY = NeighborSnapshot({}, {}, {}, {})


def test_isolated_agent_returns_box_minimizer():
    a = AgentSpec(0, QuadraticObjective(np.diag([2.0, 4.0]), [-8.0, 4.0]), BoxDomain([-1.0, -5.0], [1.0, 5.0]))
    p = CoupledProblem([a], [], 10.0)
    params = ProxParams(1.0, 1.0, {0: 3.0}, 10.0)
    out = primal_update(a, p.view(0), LocalBlock(0, np.array([0.3, 0.2])), EMPTY, params, with_prox=False)
    np.testing.assert_allclose(out.own, [1.0, -1.0], atol=1e-8)


def test_two_scalar_first_iteration_matches_piecewise_oracle():
    p = two_scalar_problem()
    tau = 0.5
    params = ProxParams(1.0, 1.0, {1: tau, 2: tau}, 10.0)
    state = IterationState.zeros(p)
    snap = snapshot_for(p, 1, state.blocks, state.duals)
    out = primal_update(p.agent(1), p.view(1), state.blocks[1], snap, params)
    # variables (x1, c) with c the copy of x2; start at zero, duals zero
    # f = (x1-1)^2 + 0.5 c^2 + 0.5 x1^2 + tau (x1^2 + c^2) + 10 * 0.5 * max(0, x1 + c - 1)
    H = np.diag([2.0 + 1.0 + 2 * tau, 1.0 + 2 * tau])
    g = np.array([-2.0, 0.0])
    row = np.array([[1.0, 1.0]])
    inside, _ = enumerate_qp(H, g, row, [1.0])
    outside, _ = enumerate_qp(H, g + 5.0 * row[0], -row, [-1.0])
    val = lambda z: 0.5 * z @ H @ z + g @ z + 5.0 * max(0.0, z[0] + z[1] - 1.0)
    ref = min(inside, outside, key=val)
    np.testing.assert_allclose(out.flat(), ref, atol=1e-7)


def test_two_scalar_with_nonzero_snapshot_matches_oracle():
    p = two_scalar_problem()
    tau = 0.3
    params = ProxParams(2.0, 1.0, {1: tau, 2: tau}, 10.0)
    blk = LocalBlock(1, np.array([0.4]), {2: np.array([0.9])})
    snap = NeighborSnapshot({2: np.array([0.7])}, {2: np.array([0.2])}, {2: np.array([0.5])}, {2: np.array([-0.3])})
    out = primal_update(p.agent(1), p.view(1), blk, snap, params)
    rho = 2.0
    # (x1, c): (x1-1)^2 + y12 (c - 0.7) + rho/2 (c-0.7)^2 - y21 x1 + rho/2 (0.2 - x1)^2 + tau||z - zk||^2 + pen
    H = np.diag([2.0 + rho + 2 * tau, rho + 2 * tau])
    g = np.array([-2.0 - 0.5 - rho * 0.2 - 2 * tau * 0.4, -0.3 - rho * 0.7 - 2 * tau * 0.9])
    row = np.array([[1.0, 1.0]])
    inside, _ = enumerate_qp(H, g, row, [1.0])
    outside, _ = enumerate_qp(H, g + 5.0 * row[0], -row, [-1.0])
    val = lambda z: 0.5 * z @ H @ z + g @ z + 5.0 * max(0.0, z[0] + z[1] - 1.0)
    ref = min(inside, outside, key=val)
    np.testing.assert_allclose(out.flat(), ref, atol=1e-7)


def _fixed_point_check(p, duals):
    sol = solve_centralized(p)
    blocks = true_blocks(p, sol.x)
    params = select_params(p)
    for i in p.ids:
        snap = snapshot_for(p, i, blocks, duals)
        out = primal_update(p.agent(i), p.view(i), blocks[i], snap, params)
        np.testing.assert_allclose(out.flat(), blocks[i].flat(), atol=1e-6)


def test_consistent_optimum_is_fixed_point_with_zero_duals_when_slack():
    rng = np.random.default_rng(5)
    p = random_pairwise_problem(4, rng, slack_range=(5.0, 6.0))
    sol = solve_centralized(p)
    assert sol.penalty == 0.0 and np.all(sol.row_activity == 0.0)
    duals = {pair: np.zeros(p.agent(pair[1]).dim) for pair in p.directed_pairs()}
    _fixed_point_check(p, duals)


def test_consistent_optimum_is_fixed_point_with_optimal_duals():
    rng = np.random.default_rng(6)
    for _ in range(3):
        p = random_pairwise_problem(5, rng, rows=(1, 2), triple_fraction=0.3)
        sol = solve_centralized(p)
        _fixed_point_check(p, consensus_duals(p, sol.row_activity))


def _random_round_inputs(rng):
    p = random_pairwise_problem(5, rng, dims=(1, 3), rows=(1, 2), triple_fraction=0.3)
    params = select_params(p, mode="practical")
    state = run_admm(p, params, max_iter=int(rng.integers(0, 6)), stop_tol=0.0)
    return p, params, state


def test_update_does_not_increase_local_surrogate():
    rng = np.random.default_rng(7)
    for _ in range(10):
        p, params, state = _random_round_inputs(rng)
        for i in p.ids:
            sub = LocalSubproblem(p.agent(i), p.view(i), params)
            snap = snapshot_for(p, i, state.blocks, state.duals)
            new = sub.solve(state.blocks[i], snap).block
            assert sub.objective(new, state.blocks[i], snap) <= sub.objective(state.blocks[i], state.blocks[i], snap) + 1e-8


def test_no_prox_equals_zero_prox():
    rng = np.random.default_rng(8)
    for _ in range(5):
        p, params, state = _random_round_inputs(rng)
        zero = ProxParams(params.rho, params.gamma, {i: 0.0 for i in p.ids}, params.beta)
        for i in p.ids:
            snap = snapshot_for(p, i, state.blocks, state.duals)
            a = primal_update(p.agent(i), p.view(i), state.blocks[i], snap, params, with_prox=False)
            b = primal_update(p.agent(i), p.view(i), state.blocks[i], snap, zero, with_prox=True)
            np.testing.assert_allclose(a.flat(), b.flat(), atol=1e-7)


def test_slack_terms_equal_direct_penalty():
    rng = np.random.default_rng(9)
    for _ in range(8):
        p, params, state = _random_round_inputs(rng)
        for i in p.ids:
            sub = LocalSubproblem(p.agent(i), p.view(i), params)
            snap = snapshot_for(p, i, state.blocks, state.duals)
            upd = sub.solve(state.blocks[i], snap)
            slack = upd.qp.z[sub.nb:]
            direct = p.view(i).penalty(upd.block.flat())
            assert float(sub.slack_cost @ slack) == pytest.approx(direct, abs=1e-7)


def test_local_mismatch_examples():
    blk = LocalBlock(0, np.zeros(1), {1: np.array([2.0])})
    snap = NeighborSnapshot({1: np.array([1.5])}, {1: np.zeros(1)}, {1: np.zeros(1)}, {1: np.zeros(1)})
    assert local_mismatch(blk, snap)[1].tolist() == [0.5]
    same = NeighborSnapshot({1: np.array([2.0])}, {1: np.zeros(1)}, {1: np.zeros(1)}, {1: np.zeros(1)})
    assert local_mismatch(blk, same)[1].tolist() == [0.0]


def test_local_mismatch_matches_flat_oracle():
    rng = np.random.default_rng(10)
    p, params, state = _random_round_inputs(rng)
    for i in p.ids:
        snap = snapshot_for(p, i, state.blocks, state.duals)
        mm = local_mismatch(state.blocks[i], snap)
        flat_copies = state.blocks[i].flat()[p.agent(i).dim:]
        flat_true = np.concatenate([state.blocks[j].own for j in p.neighbors[i]])
        got = np.concatenate([mm[j] for j in p.neighbors[i]])
        assert np.linalg.norm(got) == pytest.approx(np.linalg.norm(flat_copies - flat_true), abs=1e-15)


def test_local_mismatch_key_error():
    blk = LocalBlock(0, np.zeros(1), {1: np.zeros(1)})
    with pytest.raises(ValueError):
        local_mismatch(blk, EMPTY)


def test_failure_carries_agent_id():
    a = AgentSpec("veh", QuadraticObjective(np.eye(1), [0.0]), BoxDomain([-1.0], [1.0]), (([1.0], -5.0),))
    p = CoupledProblem([a], [], 1.0)
    with pytest.raises(LocalSolveError) as info:
        primal_update(a, p.view("veh"), LocalBlock("veh", np.zeros(1)), EMPTY, ProxParams(1.0, 1.0, {}, 1.0))
    assert info.value.agent == "veh"


def test_snapshot_keys_checked():
    p = two_scalar_problem()
    blocks = IterationState.zeros(p).blocks
    with pytest.raises(ValueError):
        primal_update(p.agent(1), p.view(1), blocks[1], EMPTY, ProxParams(1.0, 1.0, {}, 10.0))
