"""
Domain-aware pseudo-labeling: class representation bank and scoring.
"""

from src.dapl.bank import (
    BankNotReadyError,
    ClassRepBank,
    DegenerateVectorError,
    update_bank,
)
from src.dapl.scoring import (
    ScoredSample,
    assign_pseudo_label,
    blend_scores,
    cosine_similarity,
    score_unlabeled,
    select_confident,
    similarity_vector,
)

__all__ = [
    "BankNotReadyError",
    "ClassRepBank",
    "DegenerateVectorError",
    "update_bank",
    "ScoredSample",
    "assign_pseudo_label",
    "blend_scores",
    "cosine_similarity",
    "score_unlabeled",
    "select_confident",
    "similarity_vector",
]
