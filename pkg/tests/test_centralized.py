import numpy as np
import pytest

from conftest import scalar_agent, two_scalar_problem
from proxjadmm.centralized import box_minimizer, objective_range_over_box, solve_centralized
from proxjadmm.generators import random_pairwise_problem
from proxjadmm.problem import AgentSpec, BoxDomain, CoupledProblem, QuadraticObjective, eval_total_objective


def test_no_couplings_is_separable():
    rng = np.random.default_rng(30)
    p = random_pairwise_problem(4, rng, box=None)
    p = CoupledProblem(p.agents, [], p.beta)
    sol = solve_centralized(p)
    ref = np.concatenate([np.linalg.solve(a.objective.Q, -a.objective.q) for a in p.agents])
    np.testing.assert_allclose(sol.x, ref, atol=1e-8)
    assert sol.penalty == 0.0


@pytest.mark.parametrize("beta", [2.0, 10.0, 1000.0])
def test_two_scalar_example(beta):
    sol = solve_centralized(two_scalar_problem(beta))
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-7)
    assert sol.objective == pytest.approx(0.5, abs=1e-7)
    assert sol.row_activity[0] == pytest.approx(1.0 / beta, abs=1e-7)


def test_two_scalar_below_threshold_beta_pays_penalty():
    sol = solve_centralized(two_scalar_problem(0.5))
    np.testing.assert_allclose(sol.x, [0.75, 0.75], atol=1e-7)
    assert sol.penalty == pytest.approx(0.5, abs=1e-7)
    assert sol.row_activity[0] == pytest.approx(1.0, abs=1e-7)


def test_penalty_within_objective_range_on_feasible_instances():
    rng = np.random.default_rng(31)
    for _ in range(10):
        p = random_pairwise_problem(5, rng, dims=(1, 3), feasible=True)
        c1, c2 = objective_range_over_box(p)
        sol = solve_centralized(p)
        assert sol.penalty <= (c2 - c1) / p.beta + 1e-9


def test_objective_range_brackets_samples():
    rng = np.random.default_rng(32)
    p = random_pairwise_problem(3, rng, dims=(1, 3))
    c1, c2 = objective_range_over_box(p)
    lo = np.concatenate([a.domain.lower for a in p.agents])
    up = np.concatenate([a.domain.upper for a in p.agents])
    for _ in range(500):
        x = rng.uniform(lo, up)
        parts = p.split(x)
        f = sum(a.objective(parts[a.id]) for a in p.agents)
        assert c1 - 1e-9 <= f <= c2 + 1e-9
    with pytest.raises(ValueError):
        objective_range_over_box(CoupledProblem([scalar_agent(0)], [], 1.0))


def test_oracle_beats_random_feasible_perturbations():
    rng = np.random.default_rng(33)
    for _ in range(5):
        p = random_pairwise_problem(6, rng, dims=(1, 3), rows=(1, 2), triple_fraction=0.3)
        sol = solve_centralized(p)
        lo = np.concatenate([a.domain.lower for a in p.agents])
        up = np.concatenate([a.domain.upper for a in p.agents])
        for scale in (1e-4, 1e-2, 1.0):
            for _ in range(333):
                x = np.clip(sol.x + scale * rng.normal(size=p.dim), lo, up)
                assert sol.objective <= eval_total_objective(p, x) + 1e-9


def test_two_cold_starts_agree():
    rng = np.random.default_rng(34)
    p = random_pairwise_problem(10, rng, dims=(1, 3), triple_fraction=0.3)
    a = solve_centralized(p)
    b = solve_centralized(p, tol=1e-10)
    np.testing.assert_allclose(a.x, b.x, atol=1e-6)
    assert np.all((a.row_activity >= 0) & (a.row_activity <= 1))


def test_hard_rows_respected():
    a = AgentSpec(0, QuadraticObjective(np.eye(2), [-2.0, -2.0]), BoxDomain([-5.0, -5.0], [5.0, 5.0]),
                  (([1.0, 1.0], 1.0),))
    p = CoupledProblem([a], [], 1.0)
    sol = solve_centralized(p)
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-7)
    np.testing.assert_allclose(box_minimizer(p), [0.5, 0.5], atol=1e-7)
