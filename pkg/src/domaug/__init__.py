"""Feature-space semantic augmentation for domain generalization.

Core pieces: a minimal reverse-mode autodiff engine, a planted-shift synthetic
benchmark, a covariance-deviation direction selector, a variational magnitude
estimator, invariance-penalized training (risk-variance or gradient penalty),
leave-one-domain-out evaluation, and transport-based dataset-distance analysis.
"""

from .analysis import fit_class_gaussians, gaussian_w2, otdd, pairwise_otdd, pca_project
from .autodiff import NumericError, Tensor, backward, grad_check
from .data import (
    ConfigError,
    DataError,
    GeneratorConfig,
    LodoSplit,
    MultiDomainDataset,
    generate,
    load_features,
    split_leave_one_out,
    stratified_holdout,
)
from .director import DirectionMask, DomainCovariance, direction_masks, select_direction
from .estimator import AugmentDistribution, EstimatorParams, augment, estimator_loss
from .metrics import MetricsReport, MetricsRow, auc_macro_ovr
from .model import Classifier, Featurizer, load_checkpoint, save_checkpoint
from .risk import LossConfig, RiskVector, domain_risks, irmv1_penalty, total_loss, vrex_penalty
from .trainer import METHODS, LodoResult, RunConfig, TrainHistory, evaluate, lodo_run, train

__all__ = [
    "AugmentDistribution",
    "Classifier",
    "ConfigError",
    "DataError",
    "DirectionMask",
    "DomainCovariance",
    "EstimatorParams",
    "Featurizer",
    "GeneratorConfig",
    "LodoSplit",
    "LodoResult",
    "LossConfig",
    "METHODS",
    "MetricsReport",
    "MetricsRow",
    "MultiDomainDataset",
    "NumericError",
    "RiskVector",
    "RunConfig",
    "Tensor",
    "TrainHistory",
    "auc_macro_ovr",
    "augment",
    "backward",
    "direction_masks",
    "domain_risks",
    "estimator_loss",
    "evaluate",
    "fit_class_gaussians",
    "gaussian_w2",
    "generate",
    "grad_check",
    "irmv1_penalty",
    "load_checkpoint",
    "load_features",
    "lodo_run",
    "otdd",
    "pairwise_otdd",
    "pca_project",
    "save_checkpoint",
    "select_direction",
    "split_leave_one_out",
    "stratified_holdout",
    "total_loss",
    "train",
    "vrex_penalty",
]

__version__ = "0.1.0"
