"""
Training loop, evaluation, checkpoints and the metrics log.
"""

from src.trainer.checkpoint import (
    CheckpointError,
    checkpoint_digest,
    load_bundle,
    load_checkpoint,
    save_checkpoint,
)
from src.trainer.metrics import MetricsLogger, read_metrics
from src.trainer.service import (
    EmptyDomainError,
    EpochSummary,
    NonFiniteLossError,
    Trainer,
    evaluate,
    learning_rate_at,
    train,
)

__all__ = [
    "CheckpointError",
    "checkpoint_digest",
    "load_bundle",
    "load_checkpoint",
    "save_checkpoint",
    "MetricsLogger",
    "read_metrics",
    "EmptyDomainError",
    "EpochSummary",
    "NonFiniteLossError",
    "Trainer",
    "evaluate",
    "learning_rate_at",
    "train",
]
