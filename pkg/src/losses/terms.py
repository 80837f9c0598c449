"""
Loss terms, the ramp weight and objective assembly.

All cross-entropies use the natural log and accept soft targets. The
probability-space functions implement the documented formulas directly; the
*_from_logits variants compute the same values through log_softmax and are
what the trainer backpropagates through.
"""

import math
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator

from src.config import ConfigError
from src.core.models import ClassifierHead, ShapeError

PROBABILITY_FLOOR = 1e-12


# ============================================================================
# TARGET HANDLING
# ============================================================================

def as_soft_targets(labels: torch.Tensor, width: int, dtype: torch.dtype) -> torch.Tensor:
    """Class indices (N) or one-hot/soft rows (N×width) to N×width rows."""
    labels = torch.as_tensor(labels)
    if labels.dim() == 1:
        if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= width):
            raise ShapeError(f"label index out of range for {width} classes")
        return F.one_hot(labels.long(), num_classes=width).to(dtype)
    if labels.dim() != 2 or labels.shape[1] != width:
        raise ShapeError(f"labels of shape {tuple(labels.shape)} do not match {width} outputs")
    return labels.to(dtype)


def _check_rows(probs: torch.Tensor, targets: torch.Tensor) -> None:
    if probs.shape[0] != targets.shape[0]:
        raise ShapeError(f"{probs.shape[0]} predictions but {targets.shape[0]} labels")


# ============================================================================
# PROBABILITY-SPACE TERMS
# ============================================================================

def soft_cross_entropy(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over rows of -sum_c t_c log p_c; 0 for an empty batch."""
    targets = as_soft_targets(targets, probs.shape[1], probs.dtype)
    _check_rows(probs, targets)
    if probs.shape[0] == 0:
        return probs.new_zeros(())
    log_probs = torch.log(probs.clamp_min(PROBABILITY_FLOOR))
    return -(targets * log_probs).sum(dim=1).mean()


def cls_loss(
    probs_labeled: torch.Tensor,
    labels: torch.Tensor,
    probs_pseudo: Optional[torch.Tensor] = None,
    pseudo_labels: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """Mean CE over labeled rows plus mean CE over pseudo-labeled rows."""
    loss = soft_cross_entropy(probs_labeled, labels)
    if probs_pseudo is not None and pseudo_labels is not None and probs_pseudo.shape[0] > 0:
        loss = loss + soft_cross_entropy(probs_pseudo, pseudo_labels)
    return loss


def adv_loss(domain_probs: torch.Tensor, domain_labels: torch.Tensor) -> torch.Tensor:
    """Domain cross-entropy against (possibly soft) domain labels."""
    return soft_cross_entropy(domain_probs, domain_labels)


def entropy_loss(probs: torch.Tensor) -> torch.Tensor:
    """Mean Shannon entropy of the rows, with 0 log 0 = 0; 0 for an empty batch."""
    if probs.shape[0] == 0:
        return probs.new_zeros(())
    return -torch.xlogy(probs, probs).sum(dim=1).mean()


# ============================================================================
# LOGIT-SPACE TERMS (training path)
# ============================================================================

def soft_cross_entropy_from_logits(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    targets = as_soft_targets(targets, logits.shape[1], logits.dtype)
    _check_rows(logits, targets)
    if logits.shape[0] == 0:
        return logits.new_zeros(())
    return -(targets * F.log_softmax(logits, dim=1)).sum(dim=1).mean()


def entropy_from_logits(logits: torch.Tensor) -> torch.Tensor:
    if logits.shape[0] == 0:
        return logits.new_zeros(())
    log_probs = F.log_softmax(logits, dim=1)
    return -(log_probs.exp() * log_probs).sum(dim=1).mean()


def mix_losses(mixed, bundle, reversal_scale: Optional[float] = 1.0) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    (cls_mix, adv_mix) on a MixedBatch.

    cls_mix uses the generalizable head (F_c when the bundle has no F_m);
    adv_mix passes the mixed features through the reversal boundary.
    An empty batch gives (0, 0).
    """
    if mixed.is_empty:
        zero = torch.zeros((), dtype=bundle.parameter_dtype(), device=bundle.parameter_device())
        return zero, zero.clone()
    x = mixed.x_tilde.to(device=bundle.parameter_device(), dtype=bundle.parameter_dtype())
    features = bundle.extract(x)
    class_logits = bundle.class_logits(features, ClassifierHead.GENERALIZABLE)
    domain_logits = bundle.domain_logits(features, reversal_scale)
    cls_mix = soft_cross_entropy_from_logits(class_logits, mixed.y_tilde.to(class_logits))
    adv_mix = soft_cross_entropy_from_logits(domain_logits, mixed.z_tilde.to(domain_logits))
    return cls_mix, adv_mix


# ============================================================================
# RAMP AND OBJECTIVES
# ============================================================================

def ramp_weight(epoch: int, ramp_epochs: int, coefficient: float = 5.0) -> float:
    """exp(-coefficient * (1 - min(epoch / ramp_epochs, 1))^2)."""
    if ramp_epochs < 1:
        raise ConfigError(f"ramp_epochs must be >= 1, got {ramp_epochs}")
    progress = min(max(epoch, 0) / ramp_epochs, 1.0)
    return math.exp(-coefficient * (1.0 - progress) ** 2)


class LossReport(BaseModel):
    """Scalar loss values for one step or one epoch."""

    cls: float = Field(0.0, ge=0.0)
    adv: float = Field(0.0, ge=0.0)
    cls_mix: float = Field(0.0, ge=0.0)
    adv_mix: float = Field(0.0, ge=0.0)
    ent: float = Field(0.0, ge=0.0)
    ramp: float = Field(0.0, ge=0.0, le=1.0)
    total_model: float = 0.0
    total_discriminator: float = 0.0

    @model_validator(mode="after")
    def _check_finite(self) -> "LossReport":
        for name, value in self.model_dump().items():
            if not math.isfinite(value):
                raise ValueError(f"loss term {name} is not finite: {value}")
        return self

    @classmethod
    def from_terms(cls, cls_loss: float, adv: float, cls_mix: float, adv_mix: float,
                   ent: float, ramp: float) -> "LossReport":
        partial = cls(cls=cls_loss, adv=adv, cls_mix=cls_mix, adv_mix=adv_mix, ent=ent, ramp=ramp)
        model_objective, discriminator_objective = assemble_objectives(partial)
        return partial.model_copy(update={
            "total_model": model_objective,
            "total_discriminator": discriminator_objective,
        })


def assemble_objectives(report: LossReport) -> Tuple[float, float]:
    """
    (model objective, discriminator objective).

    model = cls + cls_mix + ramp * (-adv - adv_mix + ent), minimized over
    F_g, F_c and F_m; discriminator = adv + adv_mix, minimized over F_d.
    """
    model_objective = report.cls + report.cls_mix + report.ramp * (-report.adv - report.adv_mix + report.ent)
    discriminator_objective = report.adv + report.adv_mix
    return model_objective, discriminator_objective


class LossTerms:
    """Differentiable loss tensors of one training step."""

    def __init__(self, cls: torch.Tensor, adv: torch.Tensor, cls_mix: torch.Tensor,
                 adv_mix: torch.Tensor, ent: torch.Tensor, ramp: float):
        self.cls = cls
        self.adv = adv
        self.cls_mix = cls_mix
        self.adv_mix = adv_mix
        self.ent = ent
        self.ramp = ramp

    def backward_objective(self) -> torch.Tensor:
        """
        Single-pass surrogate of both objectives.

        The adversarial terms must have been computed with reversal scale
        equal to ramp: F_d then descends adv + adv_mix while F_g receives
        -ramp times that gradient.
        """
        return self.cls + self.cls_mix + self.ramp * self.ent + self.adv + self.adv_mix

    def is_finite(self) -> bool:
        values = (self.cls, self.adv, self.cls_mix, self.adv_mix, self.ent)
        return all(bool(torch.isfinite(value).all()) for value in values)

    def as_dict(self) -> dict:
        # log_softmax rounding can leave values a few ulps below zero
        return {
            "cls": max(0.0, float(self.cls.detach())),
            "adv": max(0.0, float(self.adv.detach())),
            "cls_mix": max(0.0, float(self.cls_mix.detach())),
            "adv_mix": max(0.0, float(self.adv_mix.detach())),
            "ent": max(0.0, float(self.ent.detach())),
            "ramp": self.ramp,
        }

    def report(self) -> LossReport:
        values = self.as_dict()
        return LossReport.from_terms(
            cls_loss=values["cls"],
            adv=values["adv"],
            cls_mix=values["cls_mix"],
            adv_mix=values["adv_mix"],
            ent=values["ent"],
            ramp=values["ramp"],
        )
