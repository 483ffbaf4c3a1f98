"""Reduced-rank Gaussian process regression via randomized sketching.

Builds low-rank surrogates of dense covariance matrices with a random
projection Nystrom scheme, compares them against knot-based predictive
process baselines, and fits kernel hyperparameters with a conjugate Gibbs
sampler whose covariance solves never form an n x n inverse.
"""

__version__ = "0.1.0"

from . import approx, cli, diagnostics, errors, infer, kernels, linalg, sketch
from .approx import (
    GpApproximation,
    KnotSet,
    fitc_correct,
    pp1_model,
    rm_correct,
    rp_cov,
    rp_cross,
    select_knots_pivoted,
    select_knots_random,
    sor_cov,
    sor_model,
)
from .diagnostics import (
    ApproxReport,
    ExpDecaySpec,
    TargetErrorReport,
    fixed_rank_study,
    grid_kernel_matrix,
    kl_divergence_bound,
    kl_gaussians,
    optimal_rank,
    target_error_study,
)
from .infer import (
    ApproxConfig,
    PosteriorSamples,
    PriorSpec,
    build_grid,
    ess,
    gibbs,
    marginal_loglik,
    mspe,
    predict,
    predict_at,
)
from .kernels import Dataset, KernelSpec, cross_cov, gram, kernel_eval
from .linalg import (
    DiagLowRank,
    WoodburyInverse,
    best_rank_m,
    cholesky,
    condition_number,
    eig_sym,
    norms,
    pivoted_partial_cholesky,
    woodbury_inverse,
)
from .sketch import (
    JlMatrix,
    LowRankModel,
    ProjectionMatrix,
    adaptive_rangefinder,
    draw_jl,
    fixed_rank_success_rate,
    nystrom_fixed_rank,
    nystrom_from_projection,
)
