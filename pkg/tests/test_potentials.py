import numpy as np
import pytest

from sinkhornlab.measures import (
    DiscreteMeasure,
    Domain,
    Sampler,
    custom_cost,
    sample,
    spawn_rng,
    squared_euclidean_cost,
)
from sinkhornlab.potentials import (
    dual_sobolev_norm,
    gauss_legendre_grid,
    potential_derivative,
    potential_envelope,
    semidiscrete_potential,
    sobolev_norm,
    sobolev_scaling_experiment,
)
from sinkhornlab.sinkhorn import SinkhornConfig

DOM = Domain.unit_cube(1)
SQ = squared_euclidean_cost(DOM)


def _uniform_dual(eps, n=16, seed=0):
    a = sample(Sampler.uniform_cube(1, seed), n, 0)
    b = sample(Sampler.uniform_cube(1, seed), n, 1)
    return semidiscrete_potential(b, SQ, eps, against=a)


def test_single_atom_target_collapses_to_cost():
    b = DiscreteMeasure([[0.3]], [1.0], domain=DOM)
    dual = semidiscrete_potential(b, SQ, eps=0.7, v=[0.0])
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(dual.u(x), (x - 0.3) ** 2, atol=1e-12)
    np.testing.assert_allclose(dual.gamma(x), 1.0, atol=1e-12)
    rec = potential_derivative(dual, 1, x)
    np.testing.assert_allclose(rec.derivatives[0], 2.0 * (x - 0.3), atol=1e-10)


def test_gamma_rows_sum_to_one():
    for eps in (0.01, 0.3, 10.0):
        dual = _uniform_dual(eps)
        x = spawn_rng(2, 0).random(500)
        gw = dual.gamma_weights(x)
        np.testing.assert_allclose(gw.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(
            (dual.gamma(x) * dual.weights[None, :]).sum(axis=1), 1.0, atol=1e-10
        )


def test_envelope_and_lipschitz_bounds():
    rng = spawn_rng(8, 0)
    for eps in (0.05, 0.5, 5.0):
        dual = _uniform_dual(eps, seed=3)
        x = rng.random(1000)
        lo, hi = potential_envelope(dual, x)
        u = dual.u(x)
        assert np.all(u >= lo - 1e-9)
        assert np.all(u <= hi + 1e-9)
        h = 1e-3
        slopes = np.abs(dual.u(x + h) - dual.u(x)) / h
        assert np.all(slopes <= SQ.lipschitz + 1e-8)


def test_symmetric_target_derivative_vanishes_at_center():
    b = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
    dual = semidiscrete_potential(b, SQ, eps=0.5, v=[0.0, 0.0])
    rec = potential_derivative(dual, 1, np.array([0.0]))
    assert rec.derivatives[0][0] == pytest.approx(0.0, abs=1e-14)
    fd = (dual.u(np.array([1e-6])) - dual.u(np.array([-1e-6]))) / 2e-6
    assert fd[0] == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("eps", [0.05, 0.2, 1.0])
def test_derivatives_match_finite_differences(eps):
    dual = _uniform_dual(eps, n=20, seed=5)
    x = np.linspace(0.05, 0.95, 181)
    rec = potential_derivative(dual, 2, x)
    assert rec.method == "analytic"
    h = 1e-5
    fd1 = (dual.u(x + h) - dual.u(x - h)) / (2 * h)
    scale1 = max(1.0, np.abs(rec.derivatives[0]).max())
    assert np.abs(rec.derivatives[0] - fd1).max() / scale1 <= 1e-5
    h2 = 1e-4
    fd2 = (dual.u(x + h2) - 2 * dual.u(x) + dual.u(x - h2)) / h2**2
    scale2 = max(1.0, np.abs(rec.derivatives[1]).max())
    assert np.abs(rec.derivatives[1] - fd2).max() / scale2 <= 1e-4


def test_derivative_sups_bounded_by_kernel_sups():
    for eps in (0.05, 0.5):
        dual = _uniform_dual(eps, n=12, seed=7)
        x = np.linspace(0.0, 1.0, 301)
        rec = potential_derivative(dual, 3, x)
        for k in range(3):
            assert np.abs(rec.derivatives[k]).max() <= rec.g_sup[k] + 1e-12
        # first order: |u'| <= sup |c'| = L
        assert np.abs(rec.derivatives[0]).max() <= SQ.lipschitz + 1e-10


def test_finite_difference_fallback_matches_analytic():
    plain = custom_cost(
        lambda x, y: float((x - y) ** 2),
        matrix_fn=lambda X, Y: (X[:, None, 0] - Y[None, :, 0]) ** 2,
    )
    b = sample(Sampler.uniform_cube(1, 11), 10, 1)
    v = np.zeros(10)
    smooth = semidiscrete_potential(b, SQ, 0.4, v=v)
    opaque = semidiscrete_potential(b, plain, 0.4, v=v)
    x = np.linspace(0.1, 0.9, 41)
    ref = potential_derivative(smooth, 2, x)
    fd = potential_derivative(opaque, 2, x)
    assert fd.method == "finite-difference"
    assert np.abs(fd.derivatives[0] - ref.derivatives[0]).max() < 1e-7
    assert np.abs(fd.derivatives[1] - ref.derivatives[1]).max() < 1e-4


def test_semidiscrete_input_validation():
    b = sample(Sampler.uniform_cube(1, 1), 5, 0)
    with pytest.raises(ValueError):
        semidiscrete_potential(b, SQ, eps=-1.0, v=np.zeros(5))
    with pytest.raises(ValueError):
        semidiscrete_potential(b, SQ, eps=1.0)  # neither v nor a source
    b2 = sample(Sampler.uniform_cube(2, 1), 5, 0)
    with pytest.raises(ValueError):
        semidiscrete_potential(b2, SQ, eps=1.0, v=np.zeros(5))
    with pytest.raises(ValueError):
        potential_derivative(_uniform_dual(0.5), 0, np.linspace(0, 1, 5))


def test_sobolev_norm_hand_values():
    const = sobolev_norm([lambda x: np.full_like(x, 2.5), lambda x: np.zeros_like(x)], (0.0, 1.0))
    assert const.norm == pytest.approx(2.5, abs=1e-12)
    linear = sobolev_norm([lambda x: x, lambda x: np.ones_like(x)], (0.0, 1.0))
    assert linear.norm == pytest.approx(np.sqrt(4.0 / 3.0), abs=1e-12)
    zero = sobolev_norm([lambda x: np.zeros_like(x)], (0.0, 1.0))
    assert zero.norm == 0.0


def test_sobolev_norm_quadrature_refinement():
    fns = [np.sin, np.cos, lambda x: -np.sin(x)]
    coarse = sobolev_norm(fns, (0.0, 1.0), num_nodes=2048)
    fine = sobolev_norm(fns, (0.0, 1.0), num_nodes=4096)
    assert abs(coarse.norm - fine.norm) <= 1e-6
    with pytest.raises(ValueError):
        gauss_legendre_grid(1.0, 0.0, 64)


def test_dual_sobolev_norm_nondecreasing_in_order():
    dual = _uniform_dual(0.3, n=10, seed=9)
    norms = [dual_sobolev_norm(dual, s, (0.0, 1.0), num_nodes=512).norm for s in (0, 1, 2, 3)]
    assert all(x <= y + 1e-12 for x, y in zip(norms, norms[1:]))


def test_sobolev_scaling_plateau_and_small_eps_slope():
    a = sample(Sampler.uniform_cube(1, 13), 16, 0)
    b = sample(Sampler.uniform_cube(1, 13), 16, 1)
    eps_grid = (0.01, 0.022, 0.046, 0.1, 100.0, 1000.0)
    scaling = sobolev_scaling_experiment(eps_grid, 2, a, b, SQ, num_nodes=1024)
    norms = dict(zip(scaling.eps_values, scaling.norms))
    assert abs(norms[100.0] - norms[1000.0]) <= 0.10 * norms[1000.0]
    assert scaling.fit_slope <= 1.2


def test_sobolev_scaling_zero_cost_is_flat():
    zero = custom_cost(
        lambda x, y: 0.0,
        matrix_fn=lambda X, Y: np.zeros((len(X), len(Y))),
        x_derivs={
            1: lambda x, y: np.zeros((len(x), len(y))),
            2: lambda x, y: np.zeros((len(x), len(y))),
            3: lambda x, y: np.zeros((len(x), len(y))),
        },
    )
    a = sample(Sampler.uniform_cube(1, 17), 8, 0)
    b = sample(Sampler.uniform_cube(1, 17), 8, 1)
    scaling = sobolev_scaling_experiment((0.1, 1.0, 10.0), 2, a, b, zero, num_nodes=256)
    assert np.allclose(scaling.norms, scaling.norms[0], atol=1e-10)
