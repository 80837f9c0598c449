"""
The four-network bundle: feature extractor F_g, predictive classifier F_c,
generalizable classifier F_m and domain discriminator F_d.

Target-domain inference uses F_m. When the dual classifier is disabled the
bundle has no F_m and both heads resolve to F_c.
"""

import math
from typing import Dict, Literal, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field
from torch import nn

from src.config import ConfigError
from src.core.models import ClassifierHead, TrainConfig
from src.model import layers

COMPONENT_FEATURE_EXTRACTOR = "feature_extractor"
COMPONENT_PREDICTIVE = "predictive_classifier"
COMPONENT_GENERALIZABLE = "generalizable_classifier"
COMPONENT_DISCRIMINATOR = "domain_discriminator"
COMPONENT_NAMES = (
    COMPONENT_FEATURE_EXTRACTOR,
    COMPONENT_PREDICTIVE,
    COMPONENT_GENERALIZABLE,
    COMPONENT_DISCRIMINATOR,
)


class BackboneSpec(BaseModel):
    """Architecture descriptor stored alongside checkpoints."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["mlp", "conv", "resnet18", "resnet50"]
    input_shape: Tuple[int, ...]
    feature_dim: int = Field(64, ge=1)
    hidden_dim: int = Field(128, ge=1)
    activation: Literal["relu", "tanh"] = "relu"
    pretrained: bool = False


def resolve_backbone_spec(train_config: TrainConfig, input_shape: Tuple[int, ...]) -> BackboneSpec:
    """Pick the desk-scale backbone from the input rank when backbone='auto'."""
    kind = train_config.backbone
    if kind == "auto":
        if len(input_shape) == 1:
            kind = "mlp"
        elif len(input_shape) == 3:
            kind = "conv"
        else:
            raise ConfigError(f"Cannot pick a backbone for input shape {input_shape}")
    return BackboneSpec(
        kind=kind,
        input_shape=tuple(input_shape),
        feature_dim=train_config.feature_dim,
        hidden_dim=train_config.hidden_dim,
        activation=train_config.activation,
    )


def build_feature_extractor(spec: BackboneSpec) -> nn.Module:
    if spec.kind == "mlp":
        input_dim = int(np.prod(spec.input_shape))
        return layers.mlp_extractor(input_dim, spec.hidden_dim, spec.feature_dim, spec.activation)
    if spec.kind == "conv":
        if len(spec.input_shape) != 3:
            raise ConfigError(f"conv backbone needs H×W×C inputs, got {spec.input_shape}")
        height, width, channels = spec.input_shape
        return layers.conv_extractor(height, width, channels, spec.feature_dim, spec.activation)
    return layers.residual_extractor(spec.kind, spec.feature_dim, spec.activation, spec.pretrained)


class ModelBundle(nn.Module):
    """F_g, F_c, F_m (optional) and F_d over one shared feature space."""

    def __init__(
        self,
        spec: BackboneSpec,
        num_classes: int,
        num_domains: int,
        dual_classifier: bool = True
    ):
        super().__init__()
        if num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if num_domains < 2:
            raise ConfigError("num_domains must be at least 2 (labeled + one unlabeled)")
        self.backbone_spec = spec
        self.num_classes = num_classes
        self.num_domains = num_domains
        self.dual_classifier = dual_classifier

        self.feature_extractor = build_feature_extractor(spec)
        self.predictive_classifier = nn.Linear(spec.feature_dim, num_classes)
        self.generalizable_classifier = nn.Linear(spec.feature_dim, num_classes) if dual_classifier else None
        self.domain_discriminator = layers.domain_discriminator(
            spec.feature_dim, spec.hidden_dim, num_domains, spec.activation
        )

    # ============== Components ==============

    def classifier(self, head: ClassifierHead) -> nn.Module:
        if head == ClassifierHead.GENERALIZABLE and self.generalizable_classifier is not None:
            return self.generalizable_classifier
        return self.predictive_classifier

    def components(self) -> Dict[str, nn.Module]:
        """Present components by name (F_m is absent without the dual classifier)."""
        named = {
            COMPONENT_FEATURE_EXTRACTOR: self.feature_extractor,
            COMPONENT_PREDICTIVE: self.predictive_classifier,
            COMPONENT_GENERALIZABLE: self.generalizable_classifier,
            COMPONENT_DISCRIMINATOR: self.domain_discriminator,
        }
        return {name: module for name, module in named.items() if module is not None}

    # ============== Forward pieces ==============

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return self.feature_extractor(x)

    def class_logits(self, features: torch.Tensor, head: ClassifierHead) -> torch.Tensor:
        return self.classifier(head)(features)

    def domain_logits(self, features: torch.Tensor, reversal_scale: Optional[float]) -> torch.Tensor:
        """F_d logits; reversal_scale=None bypasses the reversal boundary."""
        return self.domain_discriminator(layers.reverse_gradient(features, reversal_scale))

    def parameter_dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def parameter_device(self) -> torch.device:
        return next(self.parameters()).device


def build_bundle(train_config: TrainConfig, input_shape: Tuple[int, ...], num_domains: int) -> ModelBundle:
    """Seeded construction so identical configs give identical initial weights."""
    spec = resolve_backbone_spec(train_config, input_shape)
    torch.manual_seed(train_config.seed)
    bundle = ModelBundle(
        spec,
        num_classes=train_config.num_classes,
        num_domains=num_domains,
        dual_classifier=train_config.use_dual_classifier,
    )
    return bundle.to(train_config.device)


def as_batch(bundle: ModelBundle, batch: Union[torch.Tensor, np.ndarray]) -> torch.Tensor:
    """Convert to a tensor on the bundle's device/dtype and check the input shape."""
    tensor = torch.as_tensor(batch)
    expected = tuple(bundle.backbone_spec.input_shape)
    if tensor.dim() != len(expected) + 1 or tuple(tensor.shape[1:]) != expected:
        raise ConfigError(f"Batch shape {tuple(tensor.shape)} does not match input shape {expected}")
    return tensor.to(device=bundle.parameter_device(), dtype=bundle.parameter_dtype())


def forward_class(
    bundle: ModelBundle,
    batch: Union[torch.Tensor, np.ndarray],
    head: ClassifierHead = ClassifierHead.PREDICTIVE
) -> torch.Tensor:
    """Class probabilities (batch × C) from the chosen head."""
    x = as_batch(bundle, batch)
    logits = bundle.class_logits(bundle.extract(x), ClassifierHead(head))
    return F.softmax(logits, dim=1)


def forward_domain(
    bundle: ModelBundle,
    batch: Union[torch.Tensor, np.ndarray],
    reversal_scale: float
) -> torch.Tensor:
    """
    Domain probabilities (batch × (n+1)).

    The forward value does not depend on reversal_scale; the gradient reaching
    F_g is multiplied by -reversal_scale.

    Raises:
        ConfigError: negative or non-finite reversal_scale
    """
    if not math.isfinite(reversal_scale) or reversal_scale < 0:
        raise ConfigError(f"reversal_scale must be finite and >= 0, got {reversal_scale}")
    x = as_batch(bundle, batch)
    logits = bundle.domain_logits(bundle.extract(x), reversal_scale)
    return F.softmax(logits, dim=1)
