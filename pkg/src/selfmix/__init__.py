"""Desk-scale laboratory for learning text classifiers from noisy labels.

The package wires together six pieces:

- :mod:`selfmix.data` - datasets, labels, CSV corpus format
- :mod:`selfmix.encoder` - hashed n-gram text classifier with exact gradients
- :mod:`selfmix.gmm` - two-component loss mixture for clean/noisy splitting
- :mod:`selfmix.noise` - controlled label corruption with ground-truth masks
- :mod:`selfmix.core` - sample selection + embedding-mixup training loops
- :mod:`selfmix.harness` / :mod:`selfmix.cli` - experiments and artifacts
"""
from .core import (
    DataSplit,
    EpochStats,
    MixedBatch,
    ModelConfig,
    SelfMixConfig,
    TrainReport,
    accuracy,
    class_regularize,
    embmix,
    mix_loss,
    per_sample_losses,
    pseudo_loss,
    rdrop_loss,
    select_split,
    selection_prf,
    sharpen,
    total_loss,
    train_baseline,
    train_selfmix,
    warmup,
)
from .data import (
    Dataset,
    Example,
    ValidationReport,
    load_csv,
    one_hot,
    save_csv,
    stratified_subsample,
    validate,
)
from .encoder import (
    BatchItem,
    FeatureVector,
    ModelParams,
    OptimizerState,
    adam_step,
    backward,
    batch_loss,
    encode,
    featurize,
    featurize_text,
    head_forward,
    init_optimizer,
    init_params,
    load_checkpoint,
    predict_proba,
    save_checkpoint,
    softmax,
    tokenize,
)
from .common import NumericError, round_half_up, subseed
from .gmm import GMMParams, fit_gmm, fit_gmm_trace, log_likelihood, posterior_clean
from .harness import (
    ExperimentConfig,
    SelectionMetrics,
    analyze_losses,
    emit_loss_histogram,
    format_report,
    run_experiment,
    selection_metrics,
)
from .noise import (
    NOISE_TYPES,
    CorruptionManifest,
    TransitionMap,
    canonical_noise_type,
    inject,
    inject_asymmetric,
    inject_instance_dependent,
    inject_uniform,
    load_manifest,
    save_manifest,
)
from .synthetic import make_corpus, make_labeled_pool

__version__ = "0.1.0"

__all__ = [
    "BatchItem",
    "CorruptionManifest",
    "DataSplit",
    "Dataset",
    "EpochStats",
    "Example",
    "ExperimentConfig",
    "FeatureVector",
    "GMMParams",
    "MixedBatch",
    "ModelConfig",
    "ModelParams",
    "NOISE_TYPES",
    "NumericError",
    "OptimizerState",
    "SelectionMetrics",
    "SelfMixConfig",
    "TrainReport",
    "TransitionMap",
    "ValidationReport",
    "accuracy",
    "adam_step",
    "analyze_losses",
    "backward",
    "batch_loss",
    "canonical_noise_type",
    "class_regularize",
    "embmix",
    "emit_loss_histogram",
    "encode",
    "featurize",
    "featurize_text",
    "fit_gmm",
    "fit_gmm_trace",
    "format_report",
    "head_forward",
    "init_optimizer",
    "init_params",
    "inject",
    "inject_asymmetric",
    "inject_instance_dependent",
    "inject_uniform",
    "load_checkpoint",
    "load_csv",
    "load_manifest",
    "log_likelihood",
    "make_corpus",
    "make_labeled_pool",
    "mix_loss",
    "one_hot",
    "per_sample_losses",
    "posterior_clean",
    "predict_proba",
    "pseudo_loss",
    "rdrop_loss",
    "round_half_up",
    "run_experiment",
    "save_checkpoint",
    "save_csv",
    "save_manifest",
    "select_split",
    "selection_metrics",
    "selection_prf",
    "sharpen",
    "softmax",
    "stratified_subsample",
    "subseed",
    "tokenize",
    "total_loss",
    "train_baseline",
    "train_selfmix",
    "validate",
    "warmup",
]
