"""Differentially private Wasserstein GAN training and evaluation toolkit."""

from .bounds import (
    ActivationBounds,
    DataBound,
    check_clip_precondition,
    compute_cg,
    empirical_grad_bound,
    max_clip_constant,
)
from .data import (
    RecordMatrix,
    enforce_norm_bound,
    gen_correlated_binary,
    gen_gaussian_mixture,
    load_binary_csv,
)
from .estimator import DPWGAN
from .evaluation import (
    auc,
    binarize,
    downstream_classify,
    dwp,
    dwpre,
    nearest_neighbors,
    train_logreg,
    wasserstein_estimate,
)
from .network import (
    GradientSet,
    NetworkSpec,
    ParameterSet,
    RmspropState,
    backward,
    clip_weights,
    forward,
    rmsprop_step,
)
from .privacy import (
    MomentsLedger,
    PrivacyBudget,
    calibrate_sigma,
    empirical_dp_audit,
    privacy_loss,
    step_log_mgf,
)
from .training import (
    MetricLog,
    TrainConfig,
    noisy_batch_grad,
    per_example_critic_grad,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationBounds",
    "DataBound",
    "DPWGAN",
    "GradientSet",
    "MetricLog",
    "MomentsLedger",
    "NetworkSpec",
    "ParameterSet",
    "PrivacyBudget",
    "RecordMatrix",
    "RmspropState",
    "TrainConfig",
    "auc",
    "backward",
    "binarize",
    "calibrate_sigma",
    "check_clip_precondition",
    "clip_weights",
    "compute_cg",
    "downstream_classify",
    "dwp",
    "dwpre",
    "empirical_dp_audit",
    "empirical_grad_bound",
    "enforce_norm_bound",
    "forward",
    "gen_correlated_binary",
    "gen_gaussian_mixture",
    "load_binary_csv",
    "max_clip_constant",
    "nearest_neighbors",
    "noisy_batch_grad",
    "per_example_critic_grad",
    "privacy_loss",
    "rmsprop_step",
    "step_log_mgf",
    "train",
    "train_logreg",
    "wasserstein_estimate",
]
