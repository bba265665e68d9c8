"""Python interface to the normprop engine.

Everything lives in the compiled ``_normprop`` extension; this package just
re-exports it. Matrices cross the boundary as NumPy float64 arrays (always
copied), index lists as plain lists.
"""

from ._normprop import (
    NORM_EPS,
    DataError,
    ExperimentSummary,
    Graph,
    Hyper,
    LossConfig,
    MetricRow,
    RunResult,
    SparseMatrix,
    SplitMasks,
    SplitSpec,
    TrainConfig,
    __version__,
    classification_loss,
    confident_set,
    config_hash,
    consistent_metric,
    global_bias,
    homophilous_regularization,
    homophily,
    load_graph,
    load_prototypes,
    load_train_config,
    masked_view_check,
    metrics_to_csv,
    min_pairwise_cosine,
    propagate,
    propagation_upper_bound,
    renormalized_adjacency,
    row_l2_normalize,
    run_experiment,
    sample_split,
    save_graph,
    save_prototypes,
    save_train_config,
    sbm_generate,
    separation_loss,
    solve_prototypes,
    spmm,
    summary_to_json_string,
    train,
    validate_train_config,
)

__all__ = [
    "NORM_EPS",
    "DataError",
    "ExperimentSummary",
    "Graph",
    "Hyper",
    "LossConfig",
    "MetricRow",
    "RunResult",
    "SparseMatrix",
    "SplitMasks",
    "SplitSpec",
    "TrainConfig",
    "__version__",
    "classification_loss",
    "confident_set",
    "config_hash",
    "consistent_metric",
    "global_bias",
    "homophilous_regularization",
    "homophily",
    "load_graph",
    "load_prototypes",
    "load_train_config",
    "masked_view_check",
    "metrics_to_csv",
    "min_pairwise_cosine",
    "propagate",
    "propagation_upper_bound",
    "renormalized_adjacency",
    "row_l2_normalize",
    "run_experiment",
    "sample_split",
    "save_graph",
    "save_prototypes",
    "save_train_config",
    "sbm_generate",
    "separation_loss",
    "solve_prototypes",
    "spmm",
    "summary_to_json_string",
    "train",
    "validate_train_config",
]
