"""
Core domain types and training-set state.
"""

from src.core.models import (
    ClassifierHead,
    PseudoLabeledSample,
    RepPolicy,
    Sample,
    ShapeError,
    TrainConfig,
    one_hot,
)
from src.core.state import (
    IdentityViolationError,
    TrainState,
    init_train_state,
    migrate_confident,
    with_epoch,
)

__all__ = [
    "ClassifierHead",
    "PseudoLabeledSample",
    "RepPolicy",
    "Sample",
    "ShapeError",
    "TrainConfig",
    "one_hot",
    "IdentityViolationError",
    "TrainState",
    "init_train_state",
    "migrate_confident",
    "with_epoch",
]
