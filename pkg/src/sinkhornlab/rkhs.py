"""Matern kernels, RKHS machinery, kernel-SGD for the dual problem, and the
sample-complexity constants.

The dual of regularized OT is an expectation maximization over potentials in
a Sobolev ball; with a Matern reproducing kernel this supports stochastic
gradient ascent on kernel expansions, Rademacher-complexity bounds for the
ball, and explicit rate/concentration constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import DiscreteMeasure, Domain, GroundCost, cost_matrix, spawn_rng
from .sinkhorn import SinkhornConfig, SinkhornResult, dual_objective, sinkhorn_solve

__all__ = [
    "MaternKernel",
    "KernelExpansion",
    "TheoryConstants",
    "MCEstimate",
    "KernelSGDResult",
    "matern_eval",
    "matern_for_dimension",
    "theory_constants",
    "rademacher_bound",
    "rademacher_mc",
    "calibrate_ball_radius",
    "kernel_sgd_dual",
    "kernel_sgd_dual_stream",
]

_HALF_INTEGER_NU = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class MaternKernel:
    """Stationary Matern kernel with half-integer smoothness (closed forms)."""

    nu: float = 1.5
    lengthscale: float = 1.0
    variance: float = 1.0

    def __post_init__(self):
        if self.nu not in _HALF_INTEGER_NU:
            raise ValueError(f"nu must be one of {_HALF_INTEGER_NU}")
        if self.lengthscale <= 0 or self.variance <= 0:
            raise ValueError("lengthscale and variance must be positive")

    def _from_r(self, r: np.ndarray) -> np.ndarray:
        q = r / self.lengthscale
        if self.nu == 0.5:
            val = np.exp(-q)
        elif self.nu == 1.5:
            t = np.sqrt(3.0) * q
            val = (1.0 + t) * np.exp(-t)
        else:
            t = np.sqrt(5.0) * q
            val = (1.0 + t + t * t / 3.0) * np.exp(-t)
        return self.variance * val

    def __call__(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(self._from_r(np.linalg.norm(x - y)))

    def gram(self, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
        sq = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=-1)
        return self._from_r(np.sqrt(np.maximum(sq, 0.0)))

    @property
    def diag_value(self) -> float:
        """k(x, x), the constant K entering the rate bounds."""
        return self.variance

    def sobolev_order(self, d: int) -> float:
        """Order of the Sobolev space this kernel reproduces (informational)."""
        return self.nu + d / 2.0


def matern_eval(kernel: MaternKernel, x, y) -> float:
    return kernel(x, y)


def matern_for_dimension(d: int, lengthscale: float = 1.0, variance: float = 1.0) -> MaternKernel:
    """Kernel matching H^s with s = floor(d/2) + 1 where a closed form exists.

    Odd d gives nu = 1/2 exactly; even d would need nu = 1 (a Bessel form),
    so the smoother nu = 3/2 is substituted, which only enlarges the space.
    """
    s = d // 2 + 1
    nu = s - d / 2.0
    if nu not in _HALF_INTEGER_NU:
        nu = 1.5
    return MaternKernel(nu=nu, lengthscale=lengthscale, variance=variance)


@dataclass
class KernelExpansion:
    """Finite kernel expansion u(x) = sum_i coeff_i k(center_i, x)."""

    centers: np.ndarray
    coefficients: np.ndarray
    kernel: MaternKernel

    def __call__(self, X) -> np.ndarray:
        K = self.kernel.gram(np.atleast_2d(np.asarray(X, dtype=float)), self.centers)
        return K @ self.coefficients

    def rkhs_norm(self) -> float:
        G = self.kernel.gram(self.centers)
        return float(np.sqrt(max(self.coefficients @ G @ self.coefficients, 0.0)))


@dataclass(frozen=True)
class TheoryConstants:
    """Constants of the rate and concentration bounds for one (domain, cost,
    eps, kernel) setting."""

    kappa: float
    b_bound: float
    lambda_scale: float
    lambda_scale_halfdim: float
    kernel_diag: float
    c_bound: float
    sobolev_order: int
    epsilon: float

    def theorem3_rate(self, n: int) -> float:
        """Upper envelope 6 B lambda K / sqrt(n) of the mean deviation."""
        return 6.0 * self.b_bound * self.lambda_scale * self.kernel_diag / np.sqrt(n)

    def concentration_radius(self, n: int, delta: float) -> float:
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        return float(self.c_bound * np.sqrt(2.0 * np.log(1.0 / delta) / n))

    def concentration_bound(self, n: int, delta: float) -> float:
        return self.theorem3_rate(n) + self.concentration_radius(n, delta)


def theory_constants(
    domain: Domain, cost: GroundCost, eps: float, kernel: MaternKernel
) -> TheoryConstants:
    """Populate kappa, B, C, the ball-radius scales and the kernel diagonal."""
    if not domain.bounded:
        raise ValueError("theory constants need a bounded domain")
    if cost.lipschitz is None or cost.sup_norm is None:
        raise ValueError("cost must carry Lipschitz and sup-norm constants")
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    D = domain.diameter
    L, sup = cost.lipschitz, cost.sup_norm
    kappa = 2.0 * L * D + sup
    with np.errstate(over="ignore"):
        b_bound = float(1.0 + np.exp(2.0 * (L * D + sup) / eps))
        c_bound = float(kappa + eps * np.exp(kappa / eps))
    s = domain.dimension // 2 + 1
    return TheoryConstants(
        kappa=float(kappa),
        b_bound=b_bound,
        lambda_scale=float(max(1.0, eps ** -(s - 1))),
        lambda_scale_halfdim=float(max(1.0, eps ** -(domain.dimension / 2.0))),
        kernel_diag=kernel.diag_value,
        c_bound=c_bound,
        sobolev_order=s,
        epsilon=float(eps),
    )


def rademacher_bound(lam: float, points: np.ndarray, kernel: MaternKernel) -> float:
    """Closed-form bound (lam / n) sqrt(sum_i k(x_i, x_i)) for the RKHS ball."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    return float(lam / n * np.sqrt(n * kernel.diag_value))


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    draws: int


def rademacher_mc(
    lam: float, points: np.ndarray, kernel: MaternKernel, draws: int = 200, seed: int = 0
) -> MCEstimate:
    """Monte-Carlo Rademacher complexity of the ball of radius lam.

    For each sign draw the supremum over the ball is exact by the reproducing
    property: sup = (lam / n) sqrt(sigma' G sigma).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    G = kernel.gram(pts)
    rng = spawn_rng(seed, 0)
    sups = np.empty(draws)
    for t in range(draws):
        sigma = rng.integers(0, 2, size=n) * 2.0 - 1.0
        sups[t] = lam / n * np.sqrt(max(sigma @ G @ sigma, 0.0))
    return MCEstimate(float(sups.mean()), float(sups.std(ddof=1) / np.sqrt(draws)), draws)


def calibrate_ball_radius(
    result: SinkhornResult,
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    kernel: MaternKernel,
    ridge: float = 1e-10,
    safety: float = 2.0,
) -> float:
    """Ball radius from the RKHS-interpolant norm of converged potentials.

    Kernel ridge fit of (u, v) at the sample points, times a safety factor.
    """
    norms = []
    for pts, vals in ((a.points, result.potentials.u), (b.points, result.potentials.v)):
        G = kernel.gram(pts)
        jitter = ridge * np.trace(G) / len(G)
        c = np.linalg.solve(G + jitter * np.eye(len(G)), vals)
        norms.append(np.sqrt(max(c @ G @ c, 0.0)))
    return float(safety * max(norms))


@dataclass
class KernelSGDResult:
    u: KernelExpansion
    v: KernelExpansion
    trace: np.ndarray  # rows (iteration, dual objective)
    final_objective: float
    diverged: bool


def kernel_sgd_dual(
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    cost: GroundCost,
    eps: float,
    kernel: MaternKernel,
    lam: float,
    iterations: int = 100_000,
    step: float = 1.0,
    step_offset: float = 10.0,
    seed: int = 0,
    trace_every: int = 1000,
) -> KernelSGDResult:
    """Stochastic ascent of the dual expectation over an RKHS ball.

    One expansion coefficient is touched per drawn pair (x_t, y_t); both
    iterates are projected back onto the ball of radius lam after every
    step. The trace records the exact discrete dual objective.

    Args:
        step, step_offset: learning rate schedule step / (step_offset + sqrt(t)).
        lam: ball radius; see calibrate_ball_radius for a data-driven choice.
    """
    if eps <= 0 or lam < 0:
        raise ValueError("eps must be positive and lam nonnegative")
    C = cost_matrix(cost, a, b)
    Gx = kernel.gram(a.points)
    Gy = kernel.gram(b.points)
    n, m = len(a), len(b)
    cu = np.zeros(n)
    cv = np.zeros(m)
    u_vals = np.zeros(n)
    v_vals = np.zeros(m)
    norm2_u = 0.0
    norm2_v = 0.0
    lam2 = lam * lam
    rng = spawn_rng(seed, 1)
    draws_i = (
        rng.integers(n, size=iterations)
        if _is_uniform(a.weights)
        else rng.choice(n, size=iterations, p=a.weights)
    )
    draws_j = (
        rng.integers(m, size=iterations)
        if _is_uniform(b.weights)
        else rng.choice(m, size=iterations, p=b.weights)
    )
    etas = step / (step_offset + np.sqrt(np.arange(1, iterations + 1)))
    trace = []
    diverged = False

    for t in range(1, iterations + 1):
        i = int(draws_i[t - 1])
        j = int(draws_j[t - 1])
        eta = etas[t - 1]
        z = (u_vals[i] + v_vals[j] - C[i, j]) / eps
        g = 1.0 - np.exp(min(z, 700.0))
        if not np.isfinite(g):
            diverged = True
            break
        delta = eta * g

        norm2_u += 2.0 * delta * u_vals[i] + delta * delta * Gx[i, i]
        cu[i] += delta
        u_vals += delta * Gx[:, i]
        if norm2_u > lam2 and norm2_u > 0:
            sc = lam / np.sqrt(norm2_u)
            cu *= sc
            u_vals *= sc
            norm2_u = lam2

        norm2_v += 2.0 * delta * v_vals[j] + delta * delta * Gy[j, j]
        cv[j] += delta
        v_vals += delta * Gy[:, j]
        if norm2_v > lam2 and norm2_v > 0:
            sc = lam / np.sqrt(norm2_v)
            cv *= sc
            v_vals *= sc
            norm2_v = lam2

        if t % trace_every == 0 or t == iterations:
            obj = dual_objective(u_vals, v_vals, a.weights, b.weights, C, eps)
            trace.append((t, obj))
            if not np.isfinite(obj):
                diverged = True
                break

    final = trace[-1][1] if trace else dual_objective(
        u_vals, v_vals, a.weights, b.weights, C, eps
    )
    return KernelSGDResult(
        u=KernelExpansion(a.points.copy(), cu, kernel),
        v=KernelExpansion(b.points.copy(), cv, kernel),
        trace=np.asarray(trace, dtype=float),
        final_objective=float(final),
        diverged=diverged,
    )


def _is_uniform(w: np.ndarray) -> bool:
    return bool(np.allclose(w, 1.0 / len(w), rtol=0, atol=1e-15))


def kernel_sgd_dual_stream(
    source,
    target,
    cost: GroundCost,
    eps: float,
    kernel: MaternKernel,
    lam: float,
    iterations: int = 5_000,
    step: float = 1.0,
    step_offset: float = 10.0,
    trace_window: int = 200,
) -> KernelSGDResult:
    """Kernel-SGD fed by sample streams instead of a fixed discrete pair.

    `source` and `target` are Samplers; one expansion center is appended per
    drawn pair, so evaluation cost grows linearly with t (keep the budget
    moderate). The trace holds window-averaged dual integrand samples.
    """
    from .measures import sample

    if eps <= 0 or lam < 0:
        raise ValueError("eps must be positive and lam nonnegative")
    xs = sample(source, iterations, 2).points
    ys = sample(target, iterations, 3).points
    centers_u = np.empty((iterations, xs.shape[1]))
    centers_v = np.empty((iterations, ys.shape[1]))
    cu = np.empty(iterations)
    cv = np.empty(iterations)
    norm2_u = norm2_v = 0.0
    lam2 = lam * lam
    trace = []
    window = []
    diverged = False
    k = 0
    for t in range(1, iterations + 1):
        x, y = xs[t - 1], ys[t - 1]
        u_x = float((kernel.gram(x[None, :], centers_u[:k]) @ cu[:k])[0]) if k else 0.0
        v_y = float((kernel.gram(y[None, :], centers_v[:k]) @ cv[:k])[0]) if k else 0.0
        z = (u_x + v_y - cost(x, y)) / eps
        g = 1.0 - np.exp(min(z, 700.0))
        window.append(u_x + v_y - eps * np.exp(min(z, 700.0)) + eps)
        if not np.isfinite(g):
            diverged = True
            break
        delta = step / (step_offset + np.sqrt(t)) * g

        centers_u[k] = x
        centers_v[k] = y
        cu[k] = delta
        cv[k] = delta
        k += 1
        norm2_u += 2.0 * delta * u_x + delta * delta * kernel.diag_value
        norm2_v += 2.0 * delta * v_y + delta * delta * kernel.diag_value
        if norm2_u > lam2 > 0:
            sc = lam / np.sqrt(norm2_u)
            cu[:k] *= sc
            norm2_u = lam2
        if norm2_v > lam2 > 0:
            sc = lam / np.sqrt(norm2_v)
            cv[:k] *= sc
            norm2_v = lam2
        if t % trace_window == 0:
            trace.append((t, float(np.mean(window))))
            window = []
    final = trace[-1][1] if trace else float("nan")
    return KernelSGDResult(
        u=KernelExpansion(centers_u[:k].copy(), cu[:k].copy(), kernel),
        v=KernelExpansion(centers_v[:k].copy(), cv[:k].copy(), kernel),
        trace=np.asarray(trace, dtype=float),
        final_objective=final,
        diverged=diverged,
    )
