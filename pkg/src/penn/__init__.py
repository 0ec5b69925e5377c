"""Pattern embedded neural networks for regression and classification with missing covariates."""

from .algebra import (
    PartitionError,
    PatternPartition,
    SeparationCertificate,
    all_patterns,
    bump_gate,
    compose,
    enlarge,
    pad,
    parallelize,
    separate_by_coordinates,
    separate_by_halfspaces,
    verify_certificate,
)
from .arch import Penn, build_paper_penn, embed, paper_nn, penn_forward, penn_loss_and_grad
from .datagen import ClosedFormOracle, MonteCarloOracle, SimModel, bayes_risk, make_oracle, sample
from .metrics import MetricsRecord, excess_risk, mce, mse, paired_comparison, puv
from .missingness import (
    MCAR,
    IterativeImputer,
    LogisticMNAR,
    MeanImputer,
    PartialMatrix,
    ThresholdMNAR,
    ZeroImputer,
    draw_mask,
    fit_imputer,
    impute,
    mask,
)
from .nn import AdamState, Architecture, Mlp, adam_step, forward, loss_and_grad, truncate, unflatten
from .training import TrainConfig, lambda_sweep, magnitude_prune, reinitialize_survivors, train_with_early_stopping

__version__ = "0.1.0"
