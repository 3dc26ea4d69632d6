import numpy as np
import pytest

from sinkhornlab.exact_ot import SizeLimitError, brute_force_exact, solve_exact
from sinkhornlab.measures import Sampler, sample, spawn_rng, squared_euclidean_cost


def _sq_matrix(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (x[:, None] - y[None, :]) ** 2


def test_single_atom_pair():
    res = solve_exact([[1.0]], [1.0], [1.0])
    assert res.cost == pytest.approx(1.0)
    np.testing.assert_allclose(res.plan, [[1.0]])


def test_two_point_monotone_matching():
    C = _sq_matrix([0.0, 1.0], [2.0, 3.0])
    res = solve_exact(C, [0.5, 0.5], [0.5, 0.5])
    # monotone matching costs (4+4)/2 = 4; the crossing one (9+1)/2 = 5
    assert res.cost == pytest.approx(4.0)
    assert brute_force_exact(C) == pytest.approx(4.0)


def test_identity_matching_costs_zero():
    pts = spawn_rng(3, 0).random((6, 2))
    C = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    res = solve_exact(C, np.full(6, 1 / 6), np.full(6, 1 / 6))
    assert res.cost == pytest.approx(0.0, abs=1e-12)


def test_brute_force_small_cases():
    assert brute_force_exact([[3.5]]) == pytest.approx(3.5)
    rng = spawn_rng(11, 0)
    C = rng.random((3, 3))
    assert abs(brute_force_exact(C) - solve_exact(C, np.full(3, 1 / 3), np.full(3, 1 / 3)).cost) < 1e-10


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_assignment_equals_brute_force(n):
    for trial in range(8):
        rng = spawn_rng(17, n, trial)
        C = ((rng.random((n, 3))[:, None, :] - rng.random((n, 3))[None, :, :]) ** 2).sum(-1)
        w = np.full(n, 1.0 / n)
        res = solve_exact(C, w, w)
        assert res.cost == pytest.approx(brute_force_exact(C), abs=1e-10)
        np.testing.assert_allclose(res.plan.sum(axis=1), w, atol=1e-9)
        np.testing.assert_allclose(res.plan.sum(axis=0), w, atol=1e-9)
        assert res.cost == pytest.approx(float((res.plan * C).sum()), abs=1e-12)


def test_cost_invariant_under_support_permutation():
    rng = spawn_rng(23, 0)
    C = rng.random((7, 7))
    w = np.full(7, 1 / 7)
    base = solve_exact(C, w, w).cost
    perm = rng.permutation(7)
    permuted = solve_exact(C[np.ix_(perm, perm)], w, w).cost
    assert base == pytest.approx(permuted, abs=1e-12)


def test_monotone_matching_in_1d():
    x = np.sort(spawn_rng(5, 1).random(10))
    y = np.sort(spawn_rng(5, 2).random(10))
    C = _sq_matrix(x, y)
    res = solve_exact(C, np.full(10, 0.1), np.full(10, 0.1))
    np.testing.assert_allclose(res.plan, np.eye(10) * 0.1, atol=1e-12)


def test_general_weights_lp_path():
    # alpha = 0.25 d0 + 0.75 d1, beta = (d2 + d3)/2: monotone split costs
    # 0.25*4 + 0.25*1 + 0.5*4 = 3.25
    C = _sq_matrix([0.0, 1.0], [2.0, 3.0])
    res = solve_exact(C, [0.25, 0.75], [0.5, 0.5])
    assert res.cost == pytest.approx(3.25, abs=1e-9)
    np.testing.assert_allclose(res.plan.sum(axis=1), [0.25, 0.75], atol=1e-9)
    np.testing.assert_allclose(res.plan.sum(axis=0), [0.5, 0.5], atol=1e-9)


def test_lp_matches_assignment_on_uniform_instances():
    rng = spawn_rng(31, 0)
    C = rng.random((5, 5))
    w = np.full(5, 0.2)
    lp = solve_exact(C, w + 0.0, np.asarray([0.2, 0.2, 0.2, 0.2, 0.2]) * (1 + 1e-13))
    # perturbed weights force the LP path; cost must match the assignment
    assignment = solve_exact(C, w, w)
    assert lp.cost == pytest.approx(assignment.cost, abs=1e-8)


def test_error_conditions():
    with pytest.raises(ValueError):
        solve_exact([[np.inf]], [1.0], [1.0])
    with pytest.raises(ValueError):
        solve_exact([[1.0]], [0.7], [1.0])
    with pytest.raises(SizeLimitError):
        brute_force_exact(np.zeros((9, 9)))
    big = 600
    with pytest.raises(SizeLimitError):
        solve_exact(np.zeros((big, big)), np.full(big, 1 / big), np.full(big, 1 / big))


def test_sandwich_with_sampled_instances():
    # exact cost from the assignment never exceeds any feasible plan's cost
    m = sample(Sampler.uniform_cube(2, seed=2), 16)
    m2 = sample(Sampler.uniform_cube(2, seed=4), 16)
    cost = squared_euclidean_cost(m.domain)
    C = cost.matrix(m.points, m2.points)
    res = solve_exact(C, m.weights, m2.weights)
    product = float(np.outer(m.weights, m2.weights).ravel() @ C.ravel())
    assert res.cost <= product + 1e-12
