"""Stimulus spectrogram reconstruction from multichannel neural recordings.

Lagged ridge and small nonlinear decoders, cross-condition transfer
evaluation, rank-based sentence discriminability, null-model statistics, and
a synthetic hierarchical benchmark with exact algebraic oracles.
"""

from .data import (
    ALL_CONDITIONS,
    ConditionLabel,
    Dataset,
    NeuralTrial,
    SplitPlan,
    StimulusSpectrogram,
    load_dataset,
    make_split,
    save_dataset,
)
from .errors import (
    ConfigError,
    DataError,
    NumericError,
    SingularSystemError,
    SpecreconError,
    TrainingDivergedError,
    UndefinedCorrelationError,
    ZeroVarianceError,
)
from .lagridge import (
    ChannelScaler,
    LagSpec,
    LinearDecoder,
    build_lag_matrix,
    effective_weights,
    fit_ridge,
    grid_search_alpha,
    lag_matrix,
    load_decoder,
    predict,
    save_decoder,
)
from .melspec import MelConfig, compute_log_mel
from .metrics import (
    TopKCurve,
    auc_above_chance,
    envelope,
    pearson,
    rank_analysis,
    rank_curve_from_scores,
    spectrogram_correlation,
)
from .nnet import (
    NonlinearDecoder,
    TrainConfig,
    forward,
    grad_check,
    init_decoder,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .nullstats import (
    LinearFit,
    NullKind,
    NullSpec,
    StatResult,
    cohens_d,
    linear_fit,
    make_null_dataset,
    permutation_pvalue,
    steiger_test,
    steiger_test_nonoverlapping,
)
from .pipeline import (
    GridCell,
    GridReport,
    ModelComparison,
    NetConfig,
    RunConfig,
    emit_reports,
    run,
    run_grid,
    run_model_comparison,
    run_nulls,
)
from .synth import (
    CANONICAL_ORDERING_CONFIG,
    HierarchicalSources,
    OrderingResult,
    ProjectionSplit,
    SourceConfig,
    generate,
    project_onto_subspace,
    transfer_ordering_experiment,
    verify_transfer_identities,
)

__version__ = "0.1.0"
