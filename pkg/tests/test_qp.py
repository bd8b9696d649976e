import numpy as np
import pytest

from oracles import enumerate_qp, qp_rows
from proxjadmm.qp import INFEASIBLE, OPTIMAL, QpInstance, solve_qp


def random_qp(rng, n, m, bounds=True):
    B = rng.normal(size=(n, n))
    H = B @ B.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    G = rng.normal(size=(m, n))
    # rows pass near a random interior point so several can bind
    z0 = rng.normal(size=n)
    h = G @ z0 + rng.uniform(0.0, 1.0, size=m)
    lower = upper = None
    if bounds:
        lower = np.where(rng.uniform(size=n) < 0.5, z0 - rng.uniform(0.1, 2.0, size=n), -np.inf)
        upper = np.where(rng.uniform(size=n) < 0.5, z0 + rng.uniform(0.1, 2.0, size=n), np.inf)
    return QpInstance(H, g, G, h, lower, upper)


def test_unconstrained_scalar():
    sol = solve_qp(QpInstance([[1.0]], [-1.0]))
    assert sol.status == OPTIMAL
    assert sol.z[0] == pytest.approx(1.0, abs=1e-10)


def test_scalar_with_active_row():
    sol = solve_qp(QpInstance([[1.0]], [-1.0], [[1.0]], [0.0]))
    assert sol.status == OPTIMAL
    assert sol.z[0] == pytest.approx(0.0, abs=1e-8)
    assert sol.ineq_duals[0] == pytest.approx(1.0, abs=1e-8)


def test_scalar_with_active_bound():
    sol = solve_qp(QpInstance([[1.0]], [-1.0], upper=[0.0]))
    assert sol.z[0] == pytest.approx(0.0, abs=1e-8)
    assert sol.upper_duals[0] == pytest.approx(1.0, abs=1e-8)


def test_six_variables_four_rows_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        inst = random_qp(rng, 6, 4, bounds=False)
        sol = solve_qp(inst)
        ref, lam = enumerate_qp(inst.H, inst.g, inst.G, inst.h)
        assert sol.ok
        np.testing.assert_allclose(sol.z, ref, atol=1e-6)
        np.testing.assert_allclose(sol.ineq_duals, lam[:4], atol=1e-6)


def test_kkt_residual_within_tolerance_on_optimal():
    rng = np.random.default_rng(1)
    for _ in range(30):
        inst = random_qp(rng, int(rng.integers(1, 9)), int(rng.integers(0, 8)))
        for tol in (1e-6, 1e-8):
            sol = solve_qp(inst, tol=tol)
            assert sol.status == OPTIMAL
            assert sol.kkt_residual <= tol


def test_warm_start_returns_same_optimum():
    rng = np.random.default_rng(2)
    for _ in range(30):
        inst = random_qp(rng, 5, 6)
        cold = solve_qp(inst)
        warm = solve_qp(inst, warm=cold)
        assert warm.ok
        np.testing.assert_allclose(warm.z, cold.z, atol=2e-8)


def test_warm_start_after_perturbation():
    rng = np.random.default_rng(3)
    for _ in range(20):
        inst = random_qp(rng, 5, 6)
        prev = solve_qp(inst)
        inst2 = QpInstance(inst.H, inst.g + 0.05 * rng.normal(size=5), inst.G, inst.h, inst.lower, inst.upper)
        a = solve_qp(inst2, warm=prev)
        b = solve_qp(inst2)
        np.testing.assert_allclose(a.z, b.z, atol=2e-8)


def test_objective_not_above_random_feasible_points():
    rng = np.random.default_rng(4)
    for _ in range(10):
        inst = random_qp(rng, 4, 5)
        sol = solve_qp(inst)
        C, d = qp_rows(inst.H, inst.g, inst.G, inst.h, inst.lower, inst.upper)
        hits = 0
        for _ in range(2000):
            z = sol.z + rng.normal(scale=0.5, size=4)
            if np.all(C @ z <= d):
                hits += 1
                assert inst.objective(sol.z) <= inst.objective(z) + 1e-9
        assert hits > 0


def test_infeasible_is_reported():
    inst = QpInstance(np.eye(2), [0.0, 0.0], [[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0])
    sol = solve_qp(inst)
    assert sol.status == INFEASIBLE
    assert not sol.ok
    sol = solve_qp(QpInstance(np.eye(1), [0.0], [[1.0]], [-2.0], lower=[-1.0]))
    assert sol.status == INFEASIBLE


def test_rejects_non_psd_and_bad_tol():
    with pytest.raises(ValueError):
        solve_qp(QpInstance([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0]))
    with pytest.raises(ValueError):
        solve_qp(QpInstance([[1.0]], [0.0]), tol=0.0)


def test_psd_with_slack_epigraph():
    # min 0.5 z^2 + 3 s  s.t. 1 - z <= s, s >= 0   ->  z = 1 (penalty slope 3 beats curvature)
    inst = QpInstance(np.diag([1.0, 0.0]), [0.0, 3.0], [[-1.0, -1.0]], [-1.0], lower=[-np.inf, 0.0])
    sol = solve_qp(inst)
    assert sol.ok
    np.testing.assert_allclose(sol.z, [1.0, 0.0], atol=1e-8)


def test_degenerate_active_set_is_polished():
    # three rows meeting at the optimum in two dimensions
    H = np.eye(2)
    g = np.array([-2.0, -2.0])
    G = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    h = np.array([0.5, 0.5, 1.0])
    sol = solve_qp(QpInstance(H, g, G, h))
    assert sol.ok
    np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-8)
    assert np.all(sol.ineq_duals >= -1e-10)
