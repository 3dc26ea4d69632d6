"""Block approximation of an exact transport plan and the closed-form
approximation bound it certifies.

Given an optimal plan pi0 and a hypercube partition of resolution delta, the
block approximation redistributes the mass of each block as a local product
coupling. Its cost and entropy certificates upper-bound the gap between the
regularized and exact transport costs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exact_ot import ExactPlan
from .measures import DiscreteMeasure

__all__ = [
    "BlockPartition",
    "BlockPlan",
    "block_approximate",
    "block_entropy",
    "theorem1_bound",
    "theorem1_bound_forms",
    "optimal_delta",
]


@dataclass(frozen=True)
class BlockPartition:
    """Half-open hypercube grid [k*delta, (k+1)*delta) anchored at `origin`."""

    delta: float
    origin: np.ndarray

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))

    def keys(self, points: np.ndarray) -> np.ndarray:
        """Integer block index of each point, shape (n, d)."""
        pts = np.atleast_2d(points)
        return np.floor((pts - self.origin[None, :]) / self.delta).astype(np.int64)


def _group(keys: np.ndarray, weights: np.ndarray):
    """Collapse per-point block keys into (inverse index, block masses)."""
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    masses = np.bincount(inv, weights=weights, minlength=len(uniq))
    return inv, masses


@dataclass(frozen=True)
class BlockPlan:
    """Block approximation of a plan on the product support grid, with its
    certificates: transport cost, cost gap to the original plan, relative
    entropy, and the per-measure block entropies."""

    plan: np.ndarray
    cost: float
    cost_gap: float
    entropy: float
    h_delta_a: float
    h_delta_b: float
    partition: BlockPartition


def _origin_for(a: DiscreteMeasure, b: DiscreteMeasure) -> np.ndarray:
    corners = []
    for mu in (a, b):
        if mu.domain is not None and mu.domain.bounded:
            corners.append(mu.domain.lower)
        else:
            corners.append(mu.points.min(axis=0))
    return np.minimum(*corners)


def block_approximate(
    exact: ExactPlan,
    C: np.ndarray,
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    delta: float,
) -> BlockPlan:
    """Build the resolution-delta block approximation of an exact plan.

    The result has the same marginals as (a, b) and the same block masses as
    the input plan; blocks with no mass contribute nothing (0/0 = 0).
    `C` is the cost table used to evaluate the cost certificates.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    part = BlockPartition(delta, _origin_for(a, b))
    inv_a, mass_a = _group(part.keys(a.points), a.weights)
    inv_b, mass_b = _group(part.keys(b.points), b.weights)

    pi0 = np.asarray(exact.plan, dtype=float)
    nb_a, nb_b = len(mass_a), len(mass_b)
    flat = (inv_a[:, None] * nb_b + inv_b[None, :]).ravel()
    M = np.bincount(flat, weights=pi0.ravel(), minlength=nb_a * nb_b).reshape(nb_a, nb_b)

    # pi_delta[l, r] = M[i, j] * a_l b_r / (mass_a[i] mass_b[j]) on block (i, j)
    with np.errstate(invalid="ignore", divide="ignore"):
        fa = np.where(mass_a[inv_a] > 0, a.weights / mass_a[inv_a], 0.0)
        fb = np.where(mass_b[inv_b] > 0, b.weights / mass_b[inv_b], 0.0)
    plan = M[np.ix_(inv_a, inv_b)] * fa[:, None] * fb[None, :]

    C = np.asarray(C, dtype=float)
    cost = float((plan * C).sum())
    cost_gap = cost - float((pi0 * C).sum())

    # the density of pi_delta is constant on each block, so the relative
    # entropy reduces to a block-level sum
    pos = M > 0
    ratio = M[pos] / (mass_a[:, None] * mass_b[None, :])[pos]
    entropy = float((M[pos] * np.log(ratio)).sum())

    ha = _entropy_of_masses(mass_a)
    hb = _entropy_of_masses(mass_b)
    return BlockPlan(plan, cost, cost_gap, entropy, ha, hb, part)


def _entropy_of_masses(masses: np.ndarray) -> float:
    pos = masses[masses > 0]
    # <= 0 in exact arithmetic; clip the rounding dust of the mass sums
    return min(float((pos * np.log(pos)).sum()), 0.0)


def block_entropy(measure: DiscreteMeasure, delta: float) -> float:
    """Block entropy sum_i m_i log m_i of a measure on a bounded domain.

    Always <= 0, and bounded below by -d log(2D / delta) whenever
    delta <= 2D (D the domain diameter); the lower bound is verified here.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if measure.domain is None or not measure.domain.bounded:
        raise ValueError("block entropy needs a bounded domain")
    part = BlockPartition(delta, measure.domain.lower)
    _, masses = _group(part.keys(measure.points), measure.weights)
    h = _entropy_of_masses(masses)
    D = measure.domain.diameter
    d = measure.dimension
    if delta <= 2.0 * D and h < -d * np.log(2.0 * D / delta) - 1e-9:
        raise RuntimeError("block entropy violated its theoretical lower bound")
    return h


def theorem1_bound_forms(eps: float, d: int, L: float, D: float) -> tuple[float, float]:
    """Both printed forms of the approximation bound; they agree analytically."""
    for name, val in (("eps", eps), ("d", d), ("L", L), ("D", D)):
        if val <= 0:
            raise ValueError(f"{name} must be positive")
    sqd = np.sqrt(d)
    direct = 2.0 * eps * d * np.log(np.e**2 * L * D / (sqd * eps))
    expanded = 4.0 * eps * d + 2.0 * eps * d * np.log(L * D / (sqd * eps))
    return float(direct), float(expanded)


def theorem1_bound(eps: float, d: int, L: float, D: float) -> float:
    """Closed-form bound on W_eps - W: 2 eps d log(e^2 L D / (sqrt(d) eps))."""
    direct, expanded = theorem1_bound_forms(eps, d, L, D)
    if abs(direct - expanded) > 1e-12 * max(1.0, abs(direct)):
        raise RuntimeError("bound forms disagree beyond rounding")
    return direct


def optimal_delta(eps: float, d: int, L: float) -> float:
    """Resolution minimizing the block-approximation bound: 2 sqrt(d) eps / L."""
    for name, val in (("eps", eps), ("d", d), ("L", L)):
        if val <= 0:
            raise ValueError(f"{name} must be positive")
    return float(2.0 * np.sqrt(d) * eps / L)
