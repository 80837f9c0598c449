"""
Evolving training-set state: labeled set S_l, unlabeled set S_u and
pseudo-labeled set S_p.

Samples only ever move from S_u to S_p; pseudo-labels are frozen at migration.
The trainer is the only writer and mutates state between epochs.
"""

from typing import Dict, Iterable, List, Set

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.models import PseudoLabeledSample, Sample


class IdentityViolationError(Exception):
    """Raised when a migration would break set disjointness"""
    pass


class TrainState(BaseModel):
    """S_l, S_u and S_p with the epoch they describe."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labeled_set: List[Sample]
    unlabeled_set: List[Sample]
    pseudo_set: List[PseudoLabeledSample] = Field(default_factory=list)
    epoch: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_disjoint(self) -> "TrainState":
        labeled = [sample.sample_id for sample in self.labeled_set]
        unlabeled = [sample.sample_id for sample in self.unlabeled_set]
        pseudo = [item.sample_id for item in self.pseudo_set]
        all_ids = labeled + unlabeled + pseudo
        if len(set(all_ids)) != len(all_ids):
            raise ValueError("S_l, S_u and S_p must be pairwise disjoint and duplicate-free")
        for sample in self.labeled_set:
            if sample.class_label is None or sample.domain_id != 0:
                raise ValueError(f"sample {sample.sample_id} in S_l must be labeled and from domain 0")
        for sample in self.unlabeled_set:
            if sample.class_label is not None or sample.domain_id < 1:
                raise ValueError(f"sample {sample.sample_id} in S_u must be unlabeled and from domain >= 1")
        return self

    @property
    def total_size(self) -> int:
        """N = N_l + N_u + N_p."""
        return len(self.labeled_set) + len(self.unlabeled_set) + len(self.pseudo_set)

    def unlabeled_ids(self) -> Set[int]:
        return {sample.sample_id for sample in self.unlabeled_set}

    def pseudo_ids(self) -> Set[int]:
        return {item.sample_id for item in self.pseudo_set}

    def labeled_ids(self) -> Set[int]:
        return {sample.sample_id for sample in self.labeled_set}

    def pseudo_labels(self) -> Dict[int, int]:
        """sample_id -> frozen pseudo-label class index."""
        return {item.sample_id: item.class_index for item in self.pseudo_set}


def init_train_state(labeled: Iterable[Sample], unlabeled: Iterable[Sample]) -> TrainState:
    """Initial state: S_p empty."""
    return TrainState(labeled_set=list(labeled), unlabeled_set=list(unlabeled), pseudo_set=[], epoch=0)


def migrate_confident(state: TrainState, confident: List[PseudoLabeledSample]) -> TrainState:
    """
    Move confident samples from S_u to S_p.

    Returns a new state; S_l and the existing S_p entries are carried over
    untouched, so earlier pseudo-labels are never altered.

    Raises:
        IdentityViolationError: a confident sample is not in S_u, or appears twice
    """
    if not confident:
        return state

    unlabeled_ids = state.unlabeled_ids()
    moving: Set[int] = set()
    for item in confident:
        sample_id = item.sample_id
        if sample_id in moving:
            raise IdentityViolationError(f"sample {sample_id} appears twice in the confident list")
        if sample_id not in unlabeled_ids:
            raise IdentityViolationError(f"sample {sample_id} is not in the unlabeled set")
        moving.add(sample_id)

    remaining = [sample for sample in state.unlabeled_set if sample.sample_id not in moving]
    return state.model_copy(update={
        "unlabeled_set": remaining,
        "pseudo_set": list(state.pseudo_set) + list(confident),
    })


def with_epoch(state: TrainState, epoch: int) -> TrainState:
    return state.model_copy(update={"epoch": epoch})
