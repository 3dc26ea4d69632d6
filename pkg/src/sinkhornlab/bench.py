"""Monte-Carlo sample-complexity benchmark: divergence between two
independent n-samples of the same distribution, swept over dimension,
regularization and sample size.

Every cell (d, eps, n, rep) draws from its own counter-based stream keyed by
the master seed and the cell indices, so results do not depend on execution
order or the number of worker threads. Records sort by cell key before any
output is produced.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .measures import (
    DiscreteMeasure,
    Domain,
    GroundCost,
    derive_seed,
    l1_cost,
    spawn_rng,
    squared_euclidean_cost,
)
from .rkhs import TheoryConstants
from .sinkhorn import SinkhornConfig, divergence_terms

__all__ = [
    "ExperimentGrid",
    "ExperimentRecord",
    "SlopeFit",
    "ConcentrationReport",
    "run_grid",
    "fit_slopes",
    "concentration_check",
    "variance_profile",
    "records_to_csv",
    "RESULTS_HEADER",
]

RESULTS_HEADER = "d,epsilon,n,rep,value,seed,iterations,converged"


@dataclass(frozen=True)
class ExperimentGrid:
    """One benchmark sweep; defaults are desk-scale (minutes, not hours)."""

    dims: tuple = (2,)
    epsilons: tuple = (1.0,)
    n_values: tuple = (32, 64, 128, 256, 512, 1024, 2048, 4096)
    repetitions: int = 100
    sampler: str = "uniform"  # uniform | normal
    cost: str = "sqeuclidean"  # sqeuclidean | l1
    cube_side: float = 1.0
    master_seed: int = 0
    marginal_tolerance: float = 1e-6
    max_iterations: int = 10_000
    overrelaxation: float = 1.7
    force_identical: bool = False  # draw alpha' = alpha (self-divergence check)

    def __post_init__(self):
        if not self.dims or not self.epsilons or not self.n_values:
            raise ValueError("dims, epsilons and n_values must be nonempty")
        if list(self.n_values) != sorted(set(self.n_values)):
            raise ValueError("n_values must be strictly increasing")
        if self.repetitions < 2:
            raise ValueError("need at least two repetitions")
        if self.sampler not in ("uniform", "normal"):
            raise ValueError("sampler must be 'uniform' or 'normal'")
        if self.cost not in ("sqeuclidean", "l1"):
            raise ValueError("cost must be 'sqeuclidean' or 'l1'")

    def domain(self, d: int) -> Domain:
        if self.sampler == "uniform":
            return Domain.unit_cube(d, self.cube_side)
        return Domain.unbounded(d)

    def ground_cost(self, d: int) -> GroundCost:
        dom = self.domain(d)
        return squared_euclidean_cost(dom) if self.cost == "sqeuclidean" else l1_cost(dom)


@dataclass(frozen=True)
class ExperimentRecord:
    d: int
    epsilon: float
    n: int
    rep: int
    value: float
    seed: int
    iterations: int
    converged: bool


def _run_cell(grid: ExperimentGrid, di: int, ei: int, ni: int, rep: int) -> ExperimentRecord:
    d = grid.dims[di]
    eps = grid.epsilons[ei]
    n = grid.n_values[ni]
    dom = grid.domain(d)
    cost = grid.ground_cost(d)
    rng_key = (di, ei, ni, rep)
    rng = spawn_rng(grid.master_seed, *rng_key)
    if grid.sampler == "uniform":
        lo, up = dom.lower, dom.upper
        pts_a = lo + rng.random((n, d)) * (up - lo)
        pts_b = pts_a.copy() if grid.force_identical else lo + rng.random((n, d)) * (up - lo)
    else:
        pts_a = rng.standard_normal((n, d))
        pts_b = pts_a.copy() if grid.force_identical else rng.standard_normal((n, d))
    w = np.full(n, 1.0 / n)
    a = DiscreteMeasure(pts_a, w, domain=dom)
    b = a if grid.force_identical else DiscreteMeasure(pts_b, w, domain=dom)
    cfg = SinkhornConfig(
        epsilon=eps,
        max_iterations=grid.max_iterations,
        marginal_tolerance=grid.marginal_tolerance,
        overrelaxation=grid.overrelaxation,
    )
    terms = divergence_terms(a, b, cost, cfg)
    return ExperimentRecord(
        d=d,
        epsilon=eps,
        n=n,
        rep=rep,
        value=float(terms.value),
        seed=derive_seed(grid.master_seed, *rng_key),
        iterations=terms.iterations,
        converged=terms.converged,
    )


def run_grid(grid: ExperimentGrid, threads: int = 1, progress=None) -> list[ExperimentRecord]:
    """Run every (d, eps, n, rep) cell; output is independent of `threads`.

    Solver failures never abort the sweep: non-converged cells are recorded
    with converged=False. `progress`, if given, is called with each finished
    record (possibly out of order).
    """
    keys = [
        (di, ei, ni, rep)
        for di in range(len(grid.dims))
        for ei in range(len(grid.epsilons))
        for ni in range(len(grid.n_values))
        for rep in range(grid.repetitions)
    ]

    def work(key):
        rec = _run_cell(grid, *key)
        if progress is not None:
            progress(rec)
        return key, rec

    if threads <= 1:
        done = [work(k) for k in keys]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(work, keys))
    done.sort(key=lambda kr: kr[0])
    return [rec for _, rec in done]


@dataclass(frozen=True)
class SlopeFit:
    d: int
    epsilon: float
    slope: float
    intercept: float
    residual: float
    n_points: int
    n_min: int
    n_max: int
    excluded_nonconverged: int
    excluded_nonpositive: int


def fit_slopes(records: list[ExperimentRecord], min_points: int = 3) -> list[SlopeFit]:
    """Least-squares slope of log mean divergence against log n per (d, eps).

    Means are taken over converged repetitions only; sample sizes with a
    non-positive mean are dropped (and counted). Cells with fewer than
    `min_points` usable sizes are skipped.
    """
    cells: dict = {}
    for r in records:
        cells.setdefault((r.d, r.epsilon), []).append(r)
    fits = []
    for (d, eps), recs in sorted(cells.items()):
        by_n: dict = {}
        dropped_conv = 0
        for r in recs:
            if not r.converged:
                dropped_conv += 1
                continue
            by_n.setdefault(r.n, []).append(r.value)
        ns, means = [], []
        dropped_pos = 0
        for n, vals in sorted(by_n.items()):
            mean = float(np.mean(vals))
            if mean <= 0:
                dropped_pos += 1
                continue
            ns.append(n)
            means.append(mean)
        if len(ns) < min_points:
            continue
        lx = np.log(np.asarray(ns, dtype=float))
        ly = np.log(np.asarray(means))
        slope, intercept = np.polyfit(lx, ly, 1)
        resid = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
        fits.append(
            SlopeFit(d, eps, float(slope), float(intercept), resid,
                     len(ns), min(ns), max(ns), dropped_conv, dropped_pos)
        )
    return fits


@dataclass(frozen=True)
class ConcentrationReport:
    d: int
    epsilon: float
    n: int
    repetitions: int
    delta: float
    radius: float
    fraction_within: float
    passed: bool
    full_bound: float


def concentration_check(
    records: list[ExperimentRecord], delta: float, constants: TheoryConstants
) -> ConcentrationReport:
    """Fraction of repetitions within the concentration radius of the cell mean.

    All records must belong to a single (d, eps, n) cell with at least 50
    repetitions. The full rate-plus-deviation bound is reported for context
    (it is a generous envelope).
    """
    cells = {(r.d, r.epsilon, r.n) for r in records}
    if len(cells) != 1:
        raise ValueError("concentration check wants records from a single cell")
    if len(records) < 50:
        raise ValueError("need at least 50 repetitions")
    (d, eps, n) = cells.pop()
    vals = np.array([r.value for r in records])
    radius = constants.concentration_radius(n, delta)
    frac = float(np.mean(np.abs(vals - vals.mean()) <= radius))
    return ConcentrationReport(
        d, eps, n, len(vals), delta, radius, frac, frac >= 1.0 - delta,
        constants.concentration_bound(n, delta),
    )


def variance_profile(records: list[ExperimentRecord]) -> list[tuple]:
    """Per-cell standard deviation rows (d, eps, n, std), sample convention
    (ddof=1, so two reps {a, b} give |a-b|/sqrt(2))."""
    cells: dict = {}
    for r in records:
        cells.setdefault((r.d, r.epsilon, r.n), []).append(r.value)
    return [
        (d, eps, n, float(np.std(vals, ddof=1)))
        for (d, eps, n), vals in sorted(cells.items())
        if len(vals) >= 2
    ]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def records_to_csv(records: list[ExperimentRecord]) -> str:
    """Frozen schema: d,epsilon,n,rep,value,seed,iterations,converged.

    Floats are shortest round-trip decimals; lines end with newline only.
    """
    lines = [RESULTS_HEADER]
    for r in records:
        lines.append(
            ",".join(
                (
                    _fmt(r.d),
                    _fmt(float(r.epsilon)),
                    _fmt(r.n),
                    _fmt(r.rep),
                    _fmt(float(r.value)),
                    _fmt(r.seed),
                    _fmt(r.iterations),
                    _fmt(bool(r.converged)),
                )
            )
        )
    return "\n".join(lines) + "\n"
