"""Weighted sampling from product-pooled densities ("fusion" targets).

The package fuses weighted samples of individual factors into weighted
samples of their normalized product, via sequential Monte Carlo over
coalescing diffusion proposals, with exact layered-bridge weight estimators,
tuning guidance, divide-and-conquer hierarchies, baselines, and diagnostics.
"""

from . import errors
from .bridge import (
    LayerInfo,
    bb_interval_prob,
    sample_bridge_points,
    simulate_layer,
    unwhiten,
)
from .estimators import (
    EstimatorConfig,
    estimate_rho_tilde,
    nb_mean_gamma,
    rho_zero,
    rho_zero_centered,
)
from .guidance import (
    AdaptiveMeshPolicy,
    GuidanceContext,
    adaptive_next_interval,
    cess0_closed_form,
    k4_choice,
    nu_hat,
    nu_sup_hat,
    recommend_T,
    regular_mesh,
    sigma_a_sq,
)
from .hierarchy import HierarchyNode, build_tree, dc_fusion
from .linalg import operator_norm, pooled_precision, psd_sqrt, weighted_center
from .metrics import DensitySide, Kde1D, consensus_merge, iad, kde_1d
from .models import (
    GaussianModel,
    LogisticRegressionModel,
    NegBinRegressionModel,
    PhiBounds,
    RegressionData,
    RobustTRegressionModel,
    SubPosteriorModel,
    g_max,
    load_regression_csv,
    phi_interval_bounds,
    product_model,
    temper,
)
from .smc import (
    FusionResult,
    ParticleCloud,
    TemporalMesh,
    cess,
    compose_initial_cloud,
    ess,
    gbf,
    mcf_rejection,
    propagate_decomposed,
    propagate_step,
    regular_times,
    residual_resample,
)

__version__ = "0.1.0"
