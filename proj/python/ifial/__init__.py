"""Incremental attention learning over incomplete tabular data.

Train attention classifiers directly on data with missing cells -- no
imputation -- and study how they degrade as missingness grows.
"""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    Model,
    NumericError,
    __version__,
    auc,
    cost_ratio,
    default_k,
    inject,
    load_csv,
    load_model,
    mask_pair,
    masked_attention,
    missing_rates,
    partition_plan,
    stratified_folds,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "Model",
    "NumericError",
    "__version__",
    "auc",
    "cost_ratio",
    "default_k",
    "inject",
    "load_csv",
    "load_model",
    "mask_pair",
    "masked_attention",
    "missing_rates",
    "partition_plan",
    "stratified_folds",
    "train",
]
