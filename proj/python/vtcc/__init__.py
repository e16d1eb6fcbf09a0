"""Vision Transformer contrastive clustering engine."""

from ._vtcc import (
    ConfigError,
    ContractError,
    DatasetError,
    DivergenceError,
    NumericError,
    Trainer,
    acc,
    ari,
    cluster_contrastive_loss,
    desk_config,
    gradcheck,
    infer,
    instance_contrastive_loss,
    kmeans,
    nmi,
    normalize_config,
    large_config,
    read_records,
    set_threads,
    synthetic_dataset,
    write_records,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DatasetError",
    "DivergenceError",
    "NumericError",
    "Trainer",
    "acc",
    "ari",
    "cluster_contrastive_loss",
    "desk_config",
    "gradcheck",
    "infer",
    "instance_contrastive_loss",
    "kmeans",
    "nmi",
    "normalize_config",
    "large_config",
    "read_records",
    "set_threads",
    "synthetic_dataset",
    "write_records",
]
