"""
Networks: feature extractor, dual classifiers and domain discriminator.
"""

from src.model.bundle import (
    COMPONENT_NAMES,
    BackboneSpec,
    ModelBundle,
    as_batch,
    build_bundle,
    forward_class,
    forward_domain,
    resolve_backbone_spec,
)
from src.model.layers import GradientReversalFunction, reverse_gradient

__all__ = [
    "COMPONENT_NAMES",
    "BackboneSpec",
    "ModelBundle",
    "as_batch",
    "build_bundle",
    "forward_class",
    "forward_domain",
    "resolve_backbone_spec",
    "GradientReversalFunction",
    "reverse_gradient",
]
