"""Differentially private SGD on a synthetic biased-Bernoulli benchmark.

Library layers, bottom up: deterministic splittable randomness (`rng`),
dataset generation and persistence (`data`), the dense ReLU/softmax
classifier (`nn`), the SGD / private-SGD training loops (`optim`),
privacy-budget accounting (`privacy`), generalization and convergence
measurements (`analysis`), and the experiment drivers plus CLI
(`experiments`, `config`, `plots`, `cli`).
"""

from .analysis import (
    ConvergenceReport,
    FoldResult,
    GeneralizationCurve,
    beta_for_alpha,
    convergence_epoch,
    gap_reduction,
    generalization_curve,
)
from .config import ConfigError, ExperimentConfig, RunManifest, build_config
from .data import (
    Dataset,
    FoldSet,
    Record,
    SyntheticSpec,
    biased_success_probabilities,
    generate,
    read_csv,
    split_folds,
    write_csv,
)
from .nn import (
    DEFAULT_ARCHITECTURE,
    ActivationOverflowError,
    Architecture,
    ForwardTrace,
    Gradient,
    GradientExplosionError,
    MlpParams,
    cross_entropy,
    error_rate,
    forward,
    init_params,
    l2_norm,
    load_params,
    per_example_gradient,
    save_params,
    softmax,
)
from .optim import (
    StepRecord,
    TrainConfig,
    TrainHistory,
    TrainingExplosionError,
    clip,
    dpsgd_step,
    sample_lot,
    sgd_step,
    train,
)
from .privacy import (
    EpsDelta,
    GaussianMechanism,
    LedgerEvent,
    OutOfRegimeError,
    PrivacyLedger,
    amplify,
    compose_sequential,
    compose_strong,
    eps_for_sigma,
    ledger_total,
    sigma_for_eps,
)
from .rng import RandomStream

__version__ = "0.1.0"
