"""Signal-to-noise laboratory for importance-weighted variational gradient estimators."""

from .estimators import (
    EstimatorSpec,
    WeightPanel,
    batched_delta,
    delta_ciwae,
    delta_mk,
    delta_piwae,
    draw_weight_panel,
    estimate,
    estimate_elbo,
)
from .metrics import dsnr, ess, fit_loglog_slope, rmse_to, sign_balance, snr
from .model import (
    GenerativeParams,
    InferenceParams,
    ModelConfig,
    analytic_optimum,
    grad_log_marginal,
    grad_log_weight,
    log_marginal,
    log_weight,
    param_layout,
    perturb_params,
    reparam_sample,
    sample_dataset,
)
from .optimize import AdamHyperparams, AdamState, adam_step, train
from .replicates import replicate_estimates

__version__ = "0.1.0"
