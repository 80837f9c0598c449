"""
Pydantic models for the domain types shared by every module.

Defines schemas for:
- Samples and pseudo-labeled samples
- Training hyper-parameters (TrainConfig)
- Enums for representation policies and classifier heads
"""

import hashlib
import json
from enum import Enum
from typing import Any, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src import config


class ShapeError(Exception):
    """Raised when vector lengths or label arities do not match"""
    pass


# ============================================================================
# ENUMS
# ============================================================================

class RepPolicy(str, Enum):
    """How class representations are produced from confident samples."""
    ONE = "one"
    ENSEMBLE = "ensemble"


class ClassifierHead(str, Enum):
    PREDICTIVE = "predictive"
    GENERALIZABLE = "generalizable"


# ============================================================================
# SAMPLE MODELS
# ============================================================================

class Sample(BaseModel):
    """
    One training or evaluation sample: the (x, y, z) triple.

    Inputs are float32 arrays, either feature vectors (standardized, roughly
    zero mean and unit scale) or H×W×C images standardized per channel.
    Domain 0 is the labeled source domain; unlabeled source domains are
    1..n and carry no class_label.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sample_id: int = Field(..., ge=0)
    input: np.ndarray
    class_label: Optional[int] = Field(None, ge=0)
    domain_id: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _check_label_role(self) -> "Sample":
        if self.domain_id == 0 and self.class_label is None:
            raise ValueError("samples of the labeled domain (domain_id 0) need a class_label")
        return self

    @property
    def is_labeled(self) -> bool:
        return self.class_label is not None


class PseudoLabeledSample(BaseModel):
    """An unlabeled sample that passed the confidence threshold."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sample: Sample
    pseudo_label: np.ndarray
    score_at_assignment: float = Field(..., gt=0.0)
    epoch_assigned: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _check_one_hot(self) -> "PseudoLabeledSample":
        label = self.pseudo_label
        if label.ndim != 1 or not np.all((label == 0) | (label == 1)) or label.sum() != 1:
            raise ValueError("pseudo_label must be a one-hot vector")
        if self.sample.class_label is not None:
            raise ValueError("only unlabeled samples can receive a pseudo-label")
        return self

    @property
    def sample_id(self) -> int:
        return self.sample.sample_id

    @property
    def class_index(self) -> int:
        return int(np.argmax(self.pseudo_label))


def one_hot(index: int, size: int) -> np.ndarray:
    """Return a float32 one-hot vector."""
    if not 0 <= index < size:
        raise ShapeError(f"index {index} out of range for {size} entries")
    vector = np.zeros(size, dtype=np.float32)
    vector[index] = 1.0
    return vector


# ============================================================================
# TRAINING CONFIGURATION
# ============================================================================

class TrainConfig(BaseModel):
    """Every hyper-parameter of a run. Defaults are the full-scale values except epochs."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Domain-aware pseudo-labeling
    gamma: float = Field(config.DEFAULT_GAMMA, ge=0.0, le=1.0, description="Blend weight of q against psi")
    delta: float = Field(config.DEFAULT_DELTA, gt=0.0, description="Pseudo-label threshold")
    rep_policy: RepPolicy = Field(RepPolicy.ENSEMBLE, description="Class representation policy")
    warmup_epochs: int = Field(0, ge=0, description="Epochs before pseudo-labels are assigned")

    # Mixup
    alpha: float = Field(config.DEFAULT_ALPHA, gt=0.0, description="Beta(alpha, alpha) parameter")

    # Problem size
    num_classes: int = Field(..., ge=2)

    # Optimization
    epochs: int = Field(config.DESK_SCALE_EPOCHS, ge=0)
    batch_size: int = Field(config.DEFAULT_BATCH_SIZE, ge=2)
    steps_per_epoch: Optional[int] = Field(None, ge=1, description="None means ceil(N / batch_size)")
    lr: float = Field(config.DEFAULT_LR, gt=0.0)
    momentum: float = Field(config.DEFAULT_MOMENTUM, ge=0.0, lt=1.0)
    weight_decay: float = Field(0.0, ge=0.0)
    lr_decay_epochs: List[int] = Field(default_factory=lambda: list(config.DEFAULT_LR_DECAY_EPOCHS))
    lr_decay_factor: float = Field(config.DEFAULT_LR_DECAY_FACTOR, gt=0.0, le=1.0)
    ramp_epochs: Optional[int] = Field(None, ge=1, description="None means 30% of epochs")
    ramp_coefficient: float = Field(config.DEFAULT_RAMP_COEFFICIENT, ge=0.0)
    seed: int = 0

    # Ablation switches
    use_dapl: bool = True
    use_dual_classifier: bool = True
    use_mixup: bool = True
    mixup_all: bool = False
    use_entropy: bool = True
    use_adv_mix: bool = True
    use_pseudo_labels: bool = True
    use_adversarial: bool = True

    # Networks
    backbone: Literal["auto", "mlp", "conv", "resnet18", "resnet50"] = "auto"
    feature_dim: int = Field(config.DEFAULT_FEATURE_DIM, ge=1)
    hidden_dim: int = Field(128, ge=1)
    activation: Literal["relu", "tanh"] = "relu"
    device: str = "cpu"

    # Checkpointing (0 disables periodic checkpoints)
    checkpoint_every: int = Field(1, ge=0)

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        if any(epoch < 0 for epoch in self.lr_decay_epochs):
            raise ValueError("lr_decay_epochs must be non-negative")
        if list(self.lr_decay_epochs) != sorted(self.lr_decay_epochs):
            raise ValueError("lr_decay_epochs must be increasing")
        return self

    @property
    def resolved_ramp_epochs(self) -> int:
        if self.ramp_epochs is not None:
            return self.ramp_epochs
        return max(1, round(config.DEFAULT_RAMP_FRACTION * self.epochs))

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        """Return a validated copy with some fields replaced."""
        values = self.model_dump()
        values.update(overrides)
        return TrainConfig(**values)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON dump."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
