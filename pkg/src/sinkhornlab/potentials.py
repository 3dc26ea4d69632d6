"""One-dimensional semi-discrete dual potentials and their derivatives.

The potential u extends off the sample points through the dual optimality
condition exp(-u(x)/eps) = sum_j b_j exp((v_j - c(x, y_j))/eps). Its
derivatives follow a recurrence in auxiliary kernels g_k, evaluated here
either analytically (building each g_k as a polynomial in derivatives of u
and c) or through Richardson-extrapolated finite differences when the cost
lacks the required smoothness. Sobolev norms are computed by composite
Gauss-Legendre quadrature of the squared derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .measures import DiscreteMeasure, GroundCost, cost_matrix
from .sinkhorn import SinkhornConfig, sinkhorn_solve

__all__ = [
    "SemiDiscreteDual",
    "DerivativeRecurrence",
    "SobolevEstimate",
    "SobolevScaling",
    "semidiscrete_potential",
    "potential_derivative",
    "potential_envelope",
    "gauss_legendre_grid",
    "sobolev_norm",
    "dual_sobolev_norm",
    "sobolev_scaling_experiment",
]


@dataclass(frozen=True)
class SemiDiscreteDual:
    """Dual pair with a discrete target: v at the atoms, u evaluable anywhere."""

    atoms: np.ndarray
    weights: np.ndarray
    v: np.ndarray
    eps: float
    cost: GroundCost

    def _z(self, x: np.ndarray) -> np.ndarray:
        Cxy = self.cost.matrix(np.asarray(x, dtype=float).reshape(-1, 1), self.atoms.reshape(-1, 1))
        return (self.v[None, :] - Cxy) / self.eps + np.log(self.weights)[None, :]

    def u(self, x) -> np.ndarray:
        """Potential at arbitrary points, via a stabilized log-sum-exp."""
        Z = self._z(np.atleast_1d(x))
        mx = Z.max(axis=1)
        s = np.exp(Z - mx[:, None]).sum(axis=1)
        return -self.eps * (mx + np.log(s))

    def gamma_weights(self, x) -> np.ndarray:
        """Row-normalized coupling weights gamma(x, y_j) * b_j (rows sum to 1)."""
        Z = self._z(np.atleast_1d(x))
        Z -= Z.max(axis=1, keepdims=True)
        W = np.exp(Z)
        W /= W.sum(axis=1, keepdims=True)
        return W

    def gamma(self, x) -> np.ndarray:
        """Density gamma(x, y_j) = exp((u(x) + v_j - c(x, y_j))/eps)."""
        return self.gamma_weights(x) / self.weights[None, :]


def semidiscrete_potential(
    b: DiscreteMeasure,
    cost: GroundCost,
    eps: float,
    v: np.ndarray | None = None,
    against: DiscreteMeasure | None = None,
    cfg: SinkhornConfig | None = None,
) -> SemiDiscreteDual:
    """Build the semi-discrete dual for a 1D discrete target.

    Either pass the dual values `v` directly, or pass a source measure
    `against`, in which case v comes from a converged discrete solve.
    """
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if b.dimension != 1:
        raise ValueError("semi-discrete analysis is one-dimensional")
    if v is None:
        if against is None:
            raise ValueError("supply either v or a source measure to solve against")
        cfg = cfg or SinkhornConfig(epsilon=eps)
        if cfg.epsilon != eps:
            raise ValueError("config epsilon disagrees with eps")
        res = sinkhorn_solve(cost_matrix(cost, against, b), against, b, cfg)
        v = res.potentials.v
    v = np.asarray(v, dtype=float)
    if v.shape != (len(b),):
        raise ValueError("v must hold one value per atom of b")
    return SemiDiscreteDual(b.points[:, 0].copy(), b.weights.copy(), v, float(eps), cost)


# --- derivative recurrence -------------------------------------------------
#
# Each auxiliary kernel g_k is a linear combination of monomials
#   prod_i u^(o_i)(x) * prod_j d^{p_j}c/dx^{p_j}(x, y)
# encoded as {(sorted u-orders, sorted c-orders): coefficient}. The chain
# g_{k+1} = g_k' + (u' - c') g_k / eps acts on this representation exactly.


def _differentiate_terms(terms: dict) -> dict:
    out: dict = {}
    for (uo, co), coeff in terms.items():
        for idx in range(len(uo)):
            new = list(uo)
            new[idx] += 1
            key = (tuple(sorted(new)), co)
            out[key] = out.get(key, 0.0) + coeff
        for idx in range(len(co)):
            new = list(co)
            new[idx] += 1
            key = (uo, tuple(sorted(new)))
            out[key] = out.get(key, 0.0) + coeff
    return out


def _g_terms(order: int, eps: float) -> list[dict]:
    gs = [{((), (1,)): 1.0}]
    for _ in range(order - 1):
        g = gs[-1]
        nxt = _differentiate_terms(g)
        for (uo, co), coeff in g.items():
            ku = (tuple(sorted(uo + (1,))), co)
            nxt[ku] = nxt.get(ku, 0.0) + coeff / eps
            kc = (uo, tuple(sorted(co + (1,))))
            nxt[kc] = nxt.get(kc, 0.0) - coeff / eps
        gs.append(nxt)
    return gs


def _eval_terms(terms: dict, u_derivs: dict, cost_tables: dict, shape) -> np.ndarray:
    G = np.zeros(shape)
    for (uo, co), coeff in terms.items():
        t = np.full(shape[0], coeff)
        for o in uo:
            t = t * u_derivs[o]
        if co:
            P = cost_tables[co[0]].copy()
            for o in co[1:]:
                P *= cost_tables[o]
            G += t[:, None] * P
        else:
            G += t[:, None]
    return G


@dataclass(frozen=True)
class DerivativeRecurrence:
    """Derivatives u', ..., u^(n) of the potential on a grid, plus the sup of
    each auxiliary kernel (analytic path only)."""

    order: int
    grid: np.ndarray
    u_values: np.ndarray
    derivatives: list = field(repr=False)
    g_sup: list | None
    method: str


def _richardson(f: Callable, x: np.ndarray, h: float) -> np.ndarray:
    coarse = (f(x + h) - f(x - h)) / (2.0 * h)
    fine = (f(x + h / 2) - f(x - h / 2)) / h
    return (4.0 * fine - coarse) / 3.0


def potential_derivative(dual: SemiDiscreteDual, order: int, grid) -> DerivativeRecurrence:
    """Evaluate u', ..., u^(order) on a grid.

    Uses the analytic recurrence when the cost provides derivatives up to
    `order`; otherwise falls back to nested Richardson differencing of u.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    x = np.asarray(grid, dtype=float).ravel()
    u_vals = dual.u(x)

    if dual.cost.max_derivative_order >= order:
        gs = _g_terms(order, dual.eps)
        needed = sorted({o for g in gs for (_, co) in g for o in co})
        tables = {o: dual.cost.x_derivative(o)(x, dual.atoms) for o in needed}
        W = dual.gamma_weights(x)
        u_derivs: dict = {}
        derivs = []
        sups = []
        for k, g in enumerate(gs, start=1):
            G = _eval_terms(g, u_derivs, tables, W.shape)
            u_derivs[k] = (G * W).sum(axis=1)
            derivs.append(u_derivs[k])
            sups.append(float(np.abs(G).max()))
        return DerivativeRecurrence(order, x, u_vals, derivs, sups, "analytic")

    # finite-difference fallback for costs without the needed smoothness
    span = float(x.max() - x.min()) or 1.0
    h = 1e-4 * span
    derivs = []
    f = dual.u
    for k in range(order):
        fk = f
        f = lambda t, fk=fk: _richardson(fk, t, h)
        derivs.append(f(x))
    return DerivativeRecurrence(order, x, u_vals, derivs, None, "finite-difference")


def potential_envelope(dual: SemiDiscreteDual, x) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise envelope of u from the log-sum-exp identity:
    min_j (c(x, y_j) - v_j) <= u(x) <= max_j (c(x, y_j) - v_j)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Cxy = dual.cost.matrix(x.reshape(-1, 1), dual.atoms.reshape(-1, 1))
    gap = Cxy - dual.v[None, :]
    return gap.min(axis=1), gap.max(axis=1)


# --- Sobolev norms ---------------------------------------------------------


def gauss_legendre_grid(lo: float, hi: float, num_nodes: int, panel_order: int = 16):
    """Composite Gauss-Legendre rule on [lo, hi] with at least num_nodes nodes."""
    if hi <= lo:
        raise ValueError("empty interval")
    panels = max(1, int(np.ceil(num_nodes / panel_order)))
    nodes, weights = np.polynomial.legendre.leggauss(panel_order)
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


@dataclass(frozen=True)
class SobolevEstimate:
    order: int
    interval: tuple
    num_nodes: int
    per_order: list
    norm: float


def sobolev_norm(
    derivative_fns: Sequence[Callable],
    interval: tuple,
    num_nodes: int = 2048,
    panel_order: int = 16,
) -> SobolevEstimate:
    """H^s norm from a list of derivative evaluators [u, u', ..., u^(s)].

    Quadrature of each squared derivative over the interval; deterministic
    for a fixed grid.
    """
    lo, hi = interval
    x, w = gauss_legendre_grid(lo, hi, num_nodes, panel_order)
    per_order = [float(w @ (np.asarray(fn(x), dtype=float) ** 2)) for fn in derivative_fns]
    return SobolevEstimate(
        len(derivative_fns) - 1, (float(lo), float(hi)), len(x), per_order,
        float(np.sqrt(sum(per_order))),
    )


def dual_sobolev_norm(
    dual: SemiDiscreteDual,
    s: int,
    interval: tuple,
    num_nodes: int = 2048,
    panel_order: int = 16,
) -> SobolevEstimate:
    """H^s norm of the semi-discrete potential over an interval."""
    lo, hi = interval
    x, w = gauss_legendre_grid(lo, hi, num_nodes, panel_order)
    rec = potential_derivative(dual, s, x) if s >= 1 else None
    per_order = [float(w @ (dual.u(x) ** 2))]
    if rec is not None:
        per_order += [float(w @ (dk**2)) for dk in rec.derivatives]
    return SobolevEstimate(
        s, (float(lo), float(hi)), len(x), per_order, float(np.sqrt(sum(per_order)))
    )


@dataclass(frozen=True)
class SobolevScaling:
    eps_values: np.ndarray
    norms: np.ndarray
    fit_slope: float
    fit_range: tuple


def sobolev_scaling_experiment(
    eps_values,
    s: int,
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    cost: GroundCost,
    interval: tuple | None = None,
    num_nodes: int = 2048,
    fit_range: tuple = (1e-2, 1e-1),
    max_iterations: int = 100_000,
    overrelaxation: float = 1.5,
) -> SobolevScaling:
    """H^s norm of the potential across a regularization grid, with the
    log-log slope of norm against 1/eps fitted over the small-eps range."""
    if s < 1:
        raise ValueError("s must be >= 1")
    eps_values = np.sort(np.asarray(eps_values, dtype=float))
    if interval is None:
        if b.domain is None or not b.domain.bounded:
            raise ValueError("supply an interval for unbounded supports")
        interval = (float(b.domain.lower[0]), float(b.domain.upper[0]))
    norms = []
    for e in eps_values:
        cfg = SinkhornConfig(
            epsilon=float(e), max_iterations=max_iterations, overrelaxation=overrelaxation
        )
        dual = semidiscrete_potential(b, cost, float(e), against=a, cfg=cfg)
        norms.append(dual_sobolev_norm(dual, s, interval, num_nodes).norm)
    norms = np.asarray(norms)
    mask = (eps_values >= fit_range[0]) & (eps_values <= fit_range[1])
    if mask.sum() >= 2 and np.all(norms[mask] > 0):
        slope = float(np.polyfit(np.log(1.0 / eps_values[mask]), np.log(norms[mask]), 1)[0])
    else:
        slope = float("nan")
    return SobolevScaling(eps_values, norms, slope, tuple(fit_range))
