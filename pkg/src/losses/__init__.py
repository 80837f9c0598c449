"""
Loss terms, ramp weight and objective assembly.
"""

from src.losses.terms import (
    LossReport,
    LossTerms,
    adv_loss,
    as_soft_targets,
    assemble_objectives,
    cls_loss,
    entropy_from_logits,
    entropy_loss,
    mix_losses,
    ramp_weight,
    soft_cross_entropy,
    soft_cross_entropy_from_logits,
)

__all__ = [
    "LossReport",
    "LossTerms",
    "adv_loss",
    "as_soft_targets",
    "assemble_objectives",
    "cls_loss",
    "entropy_from_logits",
    "entropy_loss",
    "mix_losses",
    "ramp_weight",
    "soft_cross_entropy",
    "soft_cross_entropy_from_logits",
]
