"""Surrogate-based robust design optimization under manufacturing scatter.

The package combines a bounded-output Gaussian-process surrogate, quasi-random
Sobol sampling, an adaptive Monte Carlo estimator of percentile statistics and
expected-improvement Bayesian optimization into a two-pass campaign that
looks for designs whose figure of merit survives fabrication tolerances.
"""

from .bayesopt import BOResult, bo_run, expected_improvement, propose_next
from .config import CampaignConfig, NaiveSettings, PassSettings
from .domain import BoxDomain
from .errors import (CampaignError, ConfigError, DomainTooSmallError, EstimateError, FitError, InvalidCutoffError,
                     NotPositiveDefiniteError, OutlierFilterError, OutOfDomainError, RdoptError, ShapeError)
from .gp import GPHyperparams, GPModel, fit, matern52
from .montecarlo import (ManufacturingDistribution, RobustConfig, RobustEstimate, mc_error, perc_deviations,
                         percentile, robust_estimate_direct, robust_estimate_surrogate)
from .objectives import (ExternalCommand, GaussianBump, ObjectiveModel, RidgePlateau, brute_force_robust_median,
                         make_objective, reference_ridge_plateau)
from .pipeline import (CampaignStore, batch_robust_map, cluster_filter, converge_candidates, landscape_slice,
                       naive_optimize, narrow_domain, reevaluate_uncertainty, reference_campaign_config,
                       run_two_pass, shrink_eval_domain, verify_candidates)
from .sobol import sobol_sequence
from .warp import WarpedGPModel, WarpParams, derive_warp, fit_warped, g_forward, g_inverse, predict_bounded

__version__ = "0.1.0"
