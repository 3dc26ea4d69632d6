"""Entropy-regularized optimal transport lab.

Sinkhorn divergences between sampled measures, exact-OT and block
approximation certificates for the regularization bound, semi-discrete
potential analysis, RKHS/kernel-SGD machinery, and a Monte-Carlo
sample-complexity benchmark harness.
"""

from .measures import (
    DiscreteMeasure,
    Domain,
    GroundCost,
    Sampler,
    cost_matrix,
    custom_cost,
    derive_seed,
    l1_cost,
    lipschitz_of_builtin,
    sample,
    spawn_rng,
    squared_euclidean_cost,
    sup_norm_of_builtin,
)
from .exact_ot import ExactPlan, SizeLimitError, brute_force_exact, solve_exact
from .sinkhorn import (
    DualPotentials,
    SinkhornConfig,
    SinkhornResult,
    dual_objective,
    entropic_cost,
    mmd,
    neg_half_cost_kernel,
    relative_entropy,
    sinkhorn_divergence,
    sinkhorn_solve,
    sinkhorn_solve_scaling,
)
from .block_approx import (
    BlockPartition,
    BlockPlan,
    block_approximate,
    block_entropy,
    optimal_delta,
    theorem1_bound,
)
from .potentials import (
    SemiDiscreteDual,
    dual_sobolev_norm,
    potential_derivative,
    potential_envelope,
    semidiscrete_potential,
    sobolev_norm,
    sobolev_scaling_experiment,
)
from .rkhs import (
    MaternKernel,
    TheoryConstants,
    kernel_sgd_dual,
    matern_eval,
    matern_for_dimension,
    rademacher_bound,
    rademacher_mc,
    theory_constants,
)
from .bench import ExperimentGrid, ExperimentRecord, fit_slopes, run_grid

__version__ = "0.1.0"
