"""Exact (unregularized) optimal transport oracle for small discrete instances.

Used as ground truth when checking the entropic approximation bound; this is
a desk-scale solver, not a large-scale OT code.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

__all__ = ["ExactPlan", "SizeLimitError", "solve_exact", "brute_force_exact"]

ASSIGNMENT_CAP = 512
LP_CAP = 256
BRUTE_CAP = 8


class SizeLimitError(ValueError):
    """Instance exceeds the configured cap of the exact oracle."""


@dataclass(frozen=True)
class ExactPlan:
    """Optimal plan and its cost; marginals match the input weights."""

    plan: np.ndarray
    cost: float


def _validate(C: np.ndarray, a: np.ndarray, b: np.ndarray):
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    if C.shape != (len(a), len(b)):
        raise ValueError("cost matrix shape does not match the weights")
    for w in (a, b):
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise ValueError("weights must be a probability vector")


def solve_exact(C: np.ndarray, a_weights, b_weights) -> ExactPlan:
    """Minimize <pi, C> over couplings of (a, b).

    Uniform square instances are solved as an assignment problem; general
    weights go through a small LP. Ties between equally optimal matchings are
    broken arbitrarily, so certificates should compare costs, never plans.
    """
    C = np.asarray(C, dtype=float)
    a = np.asarray(a_weights, dtype=float)
    b = np.asarray(b_weights, dtype=float)
    _validate(C, a, b)
    n, m = C.shape

    uniform = (
        n == m
        and np.allclose(a, 1.0 / n, rtol=0, atol=1e-15)
        and np.allclose(b, 1.0 / n, rtol=0, atol=1e-15)
    )
    if uniform:
        if n > ASSIGNMENT_CAP:
            raise SizeLimitError(f"assignment oracle capped at n = {ASSIGNMENT_CAP}")
        rows, cols = linear_sum_assignment(C)
        plan = np.zeros((n, n))
        plan[rows, cols] = 1.0 / n
        return ExactPlan(plan, float(C[rows, cols].sum() / n))

    if max(n, m) > LP_CAP:
        raise SizeLimitError(f"LP oracle capped at max(n, m) = {LP_CAP}")
    # flow LP: n*m variables, row-sum and column-sum equality constraints
    from scipy.sparse import lil_matrix

    A_eq = lil_matrix((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog(
        C.ravel(),
        A_eq=A_eq.tocsr(),
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"exact OT LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    return ExactPlan(plan, float((plan * C).sum()))


def brute_force_exact(C: np.ndarray) -> float:
    """Minimum over all n! permutation matchings (uniform weights, n <= 8).

    Independent oracle for solve_exact; enumerates every matching.
    """
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    if n != m:
        raise ValueError("brute force oracle needs a square instance")
    if n > BRUTE_CAP:
        raise SizeLimitError(f"brute force oracle capped at n = {BRUTE_CAP}")
    idx = np.arange(n)
    best = min(C[idx, perm].sum() for perm in itertools.permutations(range(n)))
    return float(best / n)
