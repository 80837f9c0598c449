"""
Domain-aware scoring of unlabeled samples.

s = gamma * q + (1 - gamma) * psi, where q is the predictive classifier's
softmax and psi the cosine similarity of the feature to each class
representation of the sample's own domain. A sample is pseudo-labeled with
argmax s when max s > delta.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict

from src.config import ConfigError
from src.core.models import PseudoLabeledSample, Sample, ShapeError, one_hot
from src.dapl.bank import ClassRepBank, DegenerateVectorError

ArrayLike = Union[torch.Tensor, np.ndarray, Sequence[float]]


class ScoredSample(BaseModel):
    """Per-sample inference result for one epoch."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sample_id: int
    domain_id: int
    q: torch.Tensor
    psi: Optional[torch.Tensor] = None
    s: torch.Tensor
    feature: torch.Tensor


def cosine_similarity(feature: torch.Tensor, reps: torch.Tensor) -> torch.Tensor:
    """
    Cosine similarity of one feature (D) to each row of reps (C×D), clamped
    to [-1, 1].

    Raises:
        DegenerateVectorError: the feature or a representation has zero norm
    """
    feature_norm = feature.norm()
    rep_norms = reps.norm(dim=1)
    if float(feature_norm) == 0.0:
        raise DegenerateVectorError("feature vector has zero norm")
    if bool((rep_norms == 0).any()):
        raise DegenerateVectorError("a class representation has zero norm")
    similarity = (reps @ feature) / (rep_norms * feature_norm)
    return similarity.clamp(-1.0, 1.0)


def similarity_vector(
    feature: torch.Tensor,
    bank: ClassRepBank,
    domain_id: int,
    similarity: Callable[[torch.Tensor, torch.Tensor], torch.Tensor] = cosine_similarity
) -> torch.Tensor:
    """
    psi for one sample against its own domain's representations.

    Raises:
        BankNotReadyError: the domain has an absent class row
        DegenerateVectorError: zero-norm feature or representation
    """
    reps = bank.matrix(domain_id)
    return similarity(feature.to(reps.dtype), reps)


def blend_scores(q: ArrayLike, psi: ArrayLike, gamma: float) -> torch.Tensor:
    """
    gamma * q + (1 - gamma) * psi.

    Raises:
        ShapeError: q and psi differ in shape
        ConfigError: gamma outside [0, 1]
    """
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must be in [0, 1], got {gamma}")
    q_tensor = torch.as_tensor(q)
    psi_tensor = torch.as_tensor(psi)
    if q_tensor.shape != psi_tensor.shape:
        raise ShapeError(f"q has shape {tuple(q_tensor.shape)} but psi has {tuple(psi_tensor.shape)}")
    psi_tensor = psi_tensor.to(q_tensor.dtype)
    return gamma * q_tensor + (1.0 - gamma) * psi_tensor


def assign_pseudo_label(s: ArrayLike, delta: float) -> Optional[Tuple[int, np.ndarray]]:
    """
    (class index, one-hot) when max s > delta, else None.

    Ties at the maximum go to the lowest class index.
    """
    if delta <= 0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    scores = torch.as_tensor(s).detach().cpu().numpy()
    class_index = int(np.argmax(scores))
    if scores[class_index] > delta:
        return class_index, one_hot(class_index, scores.shape[0])
    return None


def score_unlabeled(
    sample_ids: Sequence[int],
    domain_ids: Sequence[int],
    q: torch.Tensor,
    features: torch.Tensor,
    bank: ClassRepBank,
    gamma: float,
    use_dapl: bool = True
) -> List[ScoredSample]:
    """
    Score a batch of unlabeled samples, grouped by domain.

    Falls back to s = q (psi = None) for a domain whose bank is not yet
    ready, for zero-norm features, and when use_dapl is off.
    """
    if q.shape[0] != len(sample_ids) or features.shape[0] != len(sample_ids):
        raise ShapeError("q, features and sample_ids must have the same length")
    q = q.detach().cpu()
    features = features.detach().cpu()
    domains = torch.as_tensor(list(domain_ids), dtype=torch.long)

    psi_rows: Dict[int, torch.Tensor] = {}
    if use_dapl:
        for domain_id in sorted(set(int(d) for d in domain_ids)):
            if domain_id not in bank.domain_ids or not bank.is_ready(domain_id):
                continue
            reps = bank.matrix(domain_id).to(features.dtype)
            rep_norms = reps.norm(dim=1)
            if bool((rep_norms == 0).any()):
                continue
            index = torch.nonzero(domains == domain_id).flatten()
            block = features[index]
            norms = block.norm(dim=1)
            valid = norms > 0
            if not bool(valid.any()):
                continue
            normalized = block[valid] / norms[valid].unsqueeze(1)
            psi = (normalized @ (reps / rep_norms.unsqueeze(1)).T).clamp(-1.0, 1.0)
            for row, position in zip(psi, index[valid].tolist()):
                psi_rows[position] = row

    scored = []
    for position, sample_id in enumerate(sample_ids):
        q_row = q[position]
        psi_row = psi_rows.get(position)
        s_row = blend_scores(q_row, psi_row, gamma) if psi_row is not None else q_row.clone()
        scored.append(ScoredSample(
            sample_id=int(sample_id),
            domain_id=int(domain_ids[position]),
            q=q_row,
            psi=psi_row,
            s=s_row,
            feature=features[position],
        ))
    return scored


def select_confident(
    scored: Sequence[ScoredSample],
    samples_by_id: Dict[int, Sample],
    delta: float,
    epoch: int
) -> List[PseudoLabeledSample]:
    """PseudoLabeledSample for every scored sample whose max s exceeds delta."""
    confident = []
    for item in scored:
        assignment = assign_pseudo_label(item.s, delta)
        if assignment is None:
            continue
        class_index, label = assignment
        confident.append(PseudoLabeledSample(
            sample=samples_by_id[item.sample_id],
            pseudo_label=label,
            score_at_assignment=float(item.s[class_index]),
            epoch_assigned=epoch,
        ))
    return confident
