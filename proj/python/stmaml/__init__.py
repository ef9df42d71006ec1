"""Meta-learning engine: MAML and its stochastic-task extension."""

from ._stmaml import (
    adapt_predict,
    config_hash,
    default_config,
    evaluate,
    gradient_check,
    sample_tasks,
    train,
)

__all__ = [
    "adapt_predict",
    "config_hash",
    "default_config",
    "evaluate",
    "gradient_check",
    "sample_tasks",
    "train",
]
