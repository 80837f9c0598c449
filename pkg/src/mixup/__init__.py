"""
Domain mixup: Beta sampling and pair/batch interpolation.
"""

from src.mixup.augment import (
    MixedBatch,
    MixedElement,
    TaggedBatch,
    build_mixed_batch,
    mix_pair,
    pair_indices,
    sample_lambda,
)

__all__ = [
    "MixedBatch",
    "MixedElement",
    "TaggedBatch",
    "build_mixed_batch",
    "mix_pair",
    "pair_indices",
    "sample_lambda",
]
