"""
Domain mixup between labeled and pseudo-labeled samples.

x~ = lam * x_l + (1 - lam) * x_u, and the same lam mixes the one-hot class
labels and the one-hot domain labels of the pair. lam ~ Beta(alpha, alpha),
one draw per pair.
"""

from typing import Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from src.config import ConfigError
from src.core.models import PseudoLabeledSample, Sample, ShapeError, one_hot


class MixedElement(BaseModel):
    """One mixed (x~, y~, z~) triple."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x_tilde: np.ndarray
    y_tilde: np.ndarray
    z_tilde: np.ndarray
    lam: float = Field(..., ge=0.0, le=1.0)


class TaggedBatch(BaseModel):
    """Inputs with one-hot (or soft) class and domain labels, row aligned."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: torch.Tensor
    y: torch.Tensor
    z: torch.Tensor

    @property
    def size(self) -> int:
        return int(self.x.shape[0])


class MixedBatch(BaseModel):
    """Row-aligned mixed inputs, soft labels and the lam used for each row."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x_tilde: torch.Tensor
    y_tilde: torch.Tensor
    z_tilde: torch.Tensor
    lam: torch.Tensor

    @property
    def size(self) -> int:
        return int(self.x_tilde.shape[0])

    @property
    def is_empty(self) -> bool:
        return self.size == 0

    @classmethod
    def empty_like(cls, batch: TaggedBatch) -> "MixedBatch":
        return cls(
            x_tilde=batch.x[:0].clone(),
            y_tilde=batch.y[:0].clone(),
            z_tilde=batch.z[:0].clone(),
            lam=torch.zeros(0, dtype=torch.float64),
        )


def sample_lambda(alpha: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw count values from Beta(alpha, alpha).

    Raises:
        ConfigError: alpha <= 0
    """
    if not alpha > 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    return rng.beta(alpha, alpha, size=count)


def mix_pair(labeled: Sample, pseudo: PseudoLabeledSample, lam: float, num_domains: int) -> MixedElement:
    """Mix one labeled sample with one pseudo-labeled sample."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lam must be in [0, 1], got {lam}")
    if labeled.class_label is None:
        raise ShapeError("the labeled side of a mixup pair needs a class label")
    if labeled.input.shape != pseudo.sample.input.shape:
        raise ShapeError(f"input shapes differ: {labeled.input.shape} vs {pseudo.sample.input.shape}")

    num_classes = pseudo.pseudo_label.shape[0]
    y_labeled = one_hot(labeled.class_label, num_classes)
    z_labeled = one_hot(labeled.domain_id, num_domains)
    z_pseudo = one_hot(pseudo.sample.domain_id, num_domains)

    return MixedElement(
        x_tilde=lam * labeled.input + (1.0 - lam) * pseudo.sample.input,
        y_tilde=lam * y_labeled + (1.0 - lam) * pseudo.pseudo_label,
        z_tilde=lam * z_labeled + (1.0 - lam) * z_pseudo,
        lam=float(lam),
    )


def pair_indices(labeled_count: int, pseudo_count: int, rng: np.random.Generator) -> np.ndarray:
    """Partner index in the pseudo batch for each labeled row."""
    if pseudo_count >= labeled_count:
        return rng.permutation(pseudo_count)[:labeled_count]
    return rng.integers(0, pseudo_count, size=labeled_count)


def build_mixed_batch(
    labeled_batch: TaggedBatch,
    pseudo_batch: Optional[TaggedBatch],
    alpha: float,
    rng: np.random.Generator
) -> MixedBatch:
    """
    Pair each labeled row with a random pseudo-labeled row and mix.

    The output has as many rows as the labeled batch. Partners are drawn
    without replacement when the pseudo batch is large enough, with
    replacement otherwise. An empty pseudo batch yields an empty MixedBatch.
    """
    if pseudo_batch is None or pseudo_batch.size == 0 or labeled_batch.size == 0:
        return MixedBatch.empty_like(labeled_batch)
    if labeled_batch.y.shape[1] != pseudo_batch.y.shape[1]:
        raise ShapeError("class label widths differ between the labeled and pseudo batches")
    if labeled_batch.z.shape[1] != pseudo_batch.z.shape[1]:
        raise ShapeError("domain label widths differ between the labeled and pseudo batches")

    partners = torch.as_tensor(pair_indices(labeled_batch.size, pseudo_batch.size, rng), dtype=torch.long)
    lam64 = torch.as_tensor(sample_lambda(alpha, labeled_batch.size, rng), dtype=torch.float64)

    def mix(left: torch.Tensor, right: torch.Tensor) -> torch.Tensor:
        lam = lam64.to(device=left.device, dtype=left.dtype)
        lam = lam.view(-1, *([1] * (left.dim() - 1)))
        return lam * left + (1.0 - lam) * right[partners.to(right.device)]

    return MixedBatch(
        x_tilde=mix(labeled_batch.x, pseudo_batch.x),
        y_tilde=mix(labeled_batch.y, pseudo_batch.y),
        z_tilde=mix(labeled_batch.z, pseudo_batch.z),
        lam=lam64,
    )
