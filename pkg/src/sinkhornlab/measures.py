"""Domains, ground costs, samplers and empirical measures.

Everything here is immutable after construction and safe to share across
threads; samplers are stateless given (seed, index key).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "Domain",
    "GroundCost",
    "DiscreteMeasure",
    "Sampler",
    "spawn_rng",
    "derive_seed",
    "squared_euclidean_cost",
    "l1_cost",
    "custom_cost",
    "lipschitz_of_builtin",
    "sup_norm_of_builtin",
    "sample",
    "cost_matrix",
]


def spawn_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, index path).

    Distinct keys give statistically independent streams, and the stream for
    a given key does not depend on how many other streams exist or in which
    order they are drawn, so parallel work is schedule-independent.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable 64-bit identifier of the stream that spawn_rng(key) uses."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _readonly(a) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in R^d, or an unbounded domain (e.g. Gaussian support)."""

    dimension: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    bounded: bool = True

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.bounded:
            if self.lower is None or self.upper is None:
                raise ValueError("bounded domain needs box intervals")
            lo = _readonly(self.lower)
            up = _readonly(self.upper)
            if lo.shape != (self.dimension,) or up.shape != (self.dimension,):
                raise ValueError("box intervals must have one interval per axis")
            if not np.all(up > lo):
                raise ValueError("box intervals must be non-degenerate")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", up)

    @staticmethod
    def unit_cube(dimension: int, side: float = 1.0) -> "Domain":
        if side <= 0:
            raise ValueError("side must be positive")
        return Domain(dimension, np.zeros(dimension), np.full(dimension, float(side)))

    @staticmethod
    def unbounded(dimension: int) -> "Domain":
        return Domain(dimension, None, None, bounded=False)

    @property
    def diameter(self) -> float:
        """Euclidean diameter of the bounding box."""
        if not self.bounded:
            raise ValueError("unbounded domain has no finite diameter")
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, points: np.ndarray, slack: float = 1e-12) -> bool:
        if not self.bounded:
            return True
        pts = np.atleast_2d(points)
        return bool(
            np.all(pts >= self.lower - slack) and np.all(pts <= self.upper + slack)
        )


def lipschitz_of_builtin(kind: str, domain: Domain) -> float:
    """Lipschitz constant (w.r.t. each argument) of a built-in cost on a domain.

    Squared Euclidean on a box of diameter D has gradient norm <= 2D; the l1
    cost has coordinate-wise slopes +-1, so its gradient has Euclidean norm
    sqrt(d).
    """
    if not domain.bounded:
        raise ValueError("Lipschitz constant of a built-in cost needs a bounded domain")
    if kind == "sqeuclidean":
        return 2.0 * domain.diameter
    if kind == "l1":
        return float(np.sqrt(domain.dimension))
    raise ValueError(f"unknown built-in cost kind {kind!r}")


def sup_norm_of_builtin(kind: str, domain: Domain) -> float:
    """Sup norm of a built-in cost over the domain box (squared diameter for
    the squared Euclidean cost, l1 extent for the l1 cost)."""
    if not domain.bounded:
        raise ValueError("sup norm of a built-in cost needs a bounded domain")
    ext = domain.upper - domain.lower
    if kind == "sqeuclidean":
        return float(np.dot(ext, ext))
    if kind == "l1":
        return float(ext.sum())
    raise ValueError(f"unknown built-in cost kind {kind!r}")


def _sqeuclidean_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    x2 = np.einsum("ij,ij->i", X, X)
    y2 = np.einsum("ij,ij->i", Y, Y)
    C = x2[:, None] + y2[None, :] - 2.0 * (X @ Y.T)
    np.maximum(C, 0.0, out=C)
    return C


def _l1_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.abs(X[:, None, :] - Y[None, :, :]).sum(axis=-1)


@dataclass(frozen=True)
class GroundCost:
    """Ground cost c(x, y) together with its regularity constants.

    `lipschitz` and `sup_norm` are None when they are unavailable (custom
    cost without caller-supplied constants, or unbounded domain); operations
    that need them refuse to run in that case instead of guessing.
    `x_derivs` maps a derivative order k to an evaluator of d^k c / dx^k for
    one-dimensional inputs.
    """

    kind: str
    lipschitz: float | None = None
    sup_norm: float | None = None
    pair_fn: Callable[[np.ndarray, np.ndarray], float] | None = None
    matrix_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    x_derivs: Mapping[int, Callable] | None = field(default=None, repr=False)

    def __call__(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.kind == "sqeuclidean":
            d = x - y
            return float(np.dot(d, d))
        if self.kind == "l1":
            return float(np.abs(x - y).sum())
        return float(self.pair_fn(x, y))

    def matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[1] != Y.shape[1]:
            raise ValueError("point clouds have mismatched dimensions")
        if self.kind == "sqeuclidean":
            return _sqeuclidean_matrix(X, Y)
        if self.kind == "l1":
            return _l1_matrix(X, Y)
        if self.matrix_fn is not None:
            return np.asarray(self.matrix_fn(X, Y), dtype=float)
        return np.array([[float(self.pair_fn(x, y)) for y in Y] for x in X])

    def x_derivative(self, order: int) -> Callable:
        """Evaluator of d^k c/dx^k on 1D grids: f(x (k,), y (m,)) -> (k, m)."""
        if order < 1:
            raise ValueError("derivative order must be >= 1")
        if self.kind == "sqeuclidean":
            if order == 1:
                return lambda x, y: 2.0 * (np.asarray(x)[:, None] - np.asarray(y)[None, :])
            if order == 2:
                return lambda x, y: np.full((len(x), len(y)), 2.0)
            return lambda x, y: np.zeros((len(x), len(y)))
        if self.kind == "l1":
            if order == 1:
                return lambda x, y: np.sign(np.asarray(x)[:, None] - np.asarray(y)[None, :])
            raise ValueError("l1 cost has no derivatives beyond order 1")
        if self.x_derivs is not None and order in self.x_derivs:
            return self.x_derivs[order]
        raise ValueError(f"cost {self.kind!r} has no derivative of order {order}")

    @property
    def max_derivative_order(self) -> int:
        if self.kind == "sqeuclidean":
            return 10**9  # derivatives of every order (zero beyond 2)
        if self.kind == "l1":
            return 1
        return max(self.x_derivs) if self.x_derivs else 0


def squared_euclidean_cost(domain: Domain) -> GroundCost:
    if domain.bounded:
        return GroundCost(
            "sqeuclidean",
            lipschitz=lipschitz_of_builtin("sqeuclidean", domain),
            sup_norm=sup_norm_of_builtin("sqeuclidean", domain),
        )
    return GroundCost("sqeuclidean")


def l1_cost(domain: Domain) -> GroundCost:
    if domain.bounded:
        return GroundCost(
            "l1",
            lipschitz=lipschitz_of_builtin("l1", domain),
            sup_norm=sup_norm_of_builtin("l1", domain),
        )
    return GroundCost("l1")


def custom_cost(
    pair_fn: Callable,
    lipschitz: float | None = None,
    sup_norm: float | None = None,
    matrix_fn: Callable | None = None,
    x_derivs: Mapping[int, Callable] | None = None,
) -> GroundCost:
    """Wrap a caller-supplied cost; constants must be supplied by the caller."""
    return GroundCost(
        "custom",
        lipschitz=lipschitz,
        sup_norm=sup_norm,
        pair_fn=pair_fn,
        matrix_fn=matrix_fn,
        x_derivs=x_derivs,
    )


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray
    domain: Domain | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(self.points), dtype=np.float64)
        w = np.ascontiguousarray(np.atleast_1d(self.weights), dtype=np.float64)
        if pts.ndim != 2 or len(pts) < 1:
            raise ValueError("support must be a non-empty (n, d) array")
        if w.shape != (len(pts),):
            raise ValueError("weights must match the number of support points")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if self.domain is not None and self.domain.bounded:
            if pts.shape[1] != self.domain.dimension:
                raise ValueError("points do not match the domain dimension")
            if not self.domain.contains(pts):
                raise ValueError("support points fall outside the domain box")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Sampler:
    """Seeded distribution over a domain: uniform on a box, standard normal,
    or a custom draw function rng, n -> (n, d) points."""

    distribution: str
    domain: Domain
    seed: int
    custom_fn: Callable[[np.random.Generator, int], np.ndarray] | None = None

    @staticmethod
    def uniform_cube(dimension: int, seed: int, side: float = 1.0) -> "Sampler":
        return Sampler("uniform", Domain.unit_cube(dimension, side), seed)

    @staticmethod
    def standard_normal(dimension: int, seed: int) -> "Sampler":
        return Sampler("normal", Domain.unbounded(dimension), seed)


def sample(sampler: Sampler, n: int, *key: int) -> DiscreteMeasure:
    """Draw the uniform-weight empirical measure of n points.

    Deterministic in (sampler.seed, key, n): repeated calls return bit
    identical measures. Extra key indices select independent sub-streams of
    the same seed (used by the benchmark grid).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = spawn_rng(sampler.seed, *key)
    d = sampler.domain.dimension
    if sampler.distribution == "uniform":
        lo, up = sampler.domain.lower, sampler.domain.upper
        pts = lo + rng.random((n, d)) * (up - lo)
    elif sampler.distribution == "normal":
        pts = rng.standard_normal((n, d))
    elif sampler.distribution == "custom":
        pts = np.asarray(sampler.custom_fn(rng, n), dtype=float)
    else:
        raise ValueError(f"unknown distribution {sampler.distribution!r}")
    return DiscreteMeasure(pts, np.full(n, 1.0 / n), domain=sampler.domain)


def cost_matrix(cost: GroundCost, a: DiscreteMeasure, b: DiscreteMeasure) -> np.ndarray:
    """Dense table c(x_i, y_j) for a pair of discrete measures."""
    if a.dimension != b.dimension:
        raise ValueError("measures live in different dimensions")
    return cost.matrix(a.points, b.points)
