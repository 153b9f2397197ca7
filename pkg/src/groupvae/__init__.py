"""Ensemble of lightweight VAEs over disjoint feature groups, fused by a
mixture of products of Gaussian experts, for wide tabular data with few
samples."""

from .config import TrainConfig, build_config
from .data import Dataset, load_csv, stratified_split, synthetic_hdlss
from .gaussians import DiagGaussian, UniformMixture, kl_std_normal, poe_combine
from .grouping import FeatureGrouping, expert_widths_for_budget, make_grouping
from .metrics import balanced_accuracy, estimate_tc
from .model import GroupedVAE, joint_posterior, subset_posteriors
from .training import beta_at_epoch, cross_validate, train

__version__ = "0.1.0"

__all__ = [
    "TrainConfig",
    "build_config",
    "Dataset",
    "load_csv",
    "stratified_split",
    "synthetic_hdlss",
    "DiagGaussian",
    "UniformMixture",
    "kl_std_normal",
    "poe_combine",
    "FeatureGrouping",
    "expert_widths_for_budget",
    "make_grouping",
    "balanced_accuracy",
    "estimate_tc",
    "GroupedVAE",
    "joint_posterior",
    "subset_posteriors",
    "beta_at_epoch",
    "cross_validate",
    "train",
    "__version__",
]
