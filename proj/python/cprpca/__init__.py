from ._cprpca import (
    DimensionError,
    InsufficientData,
    InvalidInput,
    InvalidParameter,
    UnknownSetting,
    generate,
    hard_threshold,
    project_incoherent,
    run_replicate,
    solve,
    split_cp,
    truncate_sparse,
    weighted_quantile,
)

__all__ = [
    "DimensionError",
    "InsufficientData",
    "InvalidInput",
    "InvalidParameter",
    "UnknownSetting",
    "generate",
    "hard_threshold",
    "project_incoherent",
    "run_replicate",
    "solve",
    "split_cp",
    "truncate_sparse",
    "weighted_quantile",
]
