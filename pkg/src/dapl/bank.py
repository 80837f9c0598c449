"""
Domain-aware class-representation bank.

For every unlabeled domain d the bank holds a C×D matrix M^d whose rows
start absent and are filled from confident samples of that domain, plus the
highest confidence seen per (d, c) and, for the Ensemble policy, every
admitted feature vector.

Reads and writes are stamped with the bank clock (the trainer sets it to the
current epoch) so the read-after-write order can be audited.
"""

import copy
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import torch

from src.core.models import RepPolicy

ACCESS_READ = "read"
ACCESS_WRITE = "write"


class BankNotReadyError(Exception):
    """Raised when a domain still has absent class representations"""
    pass


class DegenerateVectorError(Exception):
    """Raised when a feature or representation has zero norm"""
    pass


class ClassRepBank:
    """Per-domain class representations with confidence bookkeeping."""

    def __init__(
        self,
        num_classes: int,
        feature_dim: int,
        domain_ids: Iterable[int],
        dtype: torch.dtype = torch.float32
    ):
        self.num_classes = num_classes
        self.feature_dim = feature_dim
        self.clock = 0
        self.access_log: List[Tuple[str, int]] = []

        self._reps: Dict[int, torch.Tensor] = {}
        self._present: Dict[int, torch.Tensor] = {}
        self._best: Dict[int, torch.Tensor] = {}
        self._candidates: Dict[Tuple[int, int], List[torch.Tensor]] = {}
        for domain_id in sorted(set(domain_ids)):
            if domain_id < 1:
                raise ValueError("class representations exist for unlabeled domains (id >= 1) only")
            self._reps[domain_id] = torch.zeros(num_classes, feature_dim, dtype=dtype)
            self._present[domain_id] = torch.zeros(num_classes, dtype=torch.bool)
            self._best[domain_id] = torch.full((num_classes,), float("-inf"), dtype=torch.float64)
            for class_index in range(num_classes):
                self._candidates[(domain_id, class_index)] = []

    # ============== Queries ==============

    @property
    def domain_ids(self) -> List[int]:
        return list(self._reps.keys())

    def _check_domain(self, domain_id: int) -> None:
        if domain_id not in self._reps:
            raise KeyError(f"domain {domain_id} has no class representations")

    def is_ready(self, domain_id: int) -> bool:
        """True once every class row of the domain is filled."""
        self._check_domain(domain_id)
        return bool(self._present[domain_id].all())

    def row(self, domain_id: int, class_index: int) -> Optional[torch.Tensor]:
        self._check_domain(domain_id)
        if not self._present[domain_id][class_index]:
            return None
        return self._reps[domain_id][class_index].clone()

    def best_confidence(self, domain_id: int, class_index: int) -> float:
        self._check_domain(domain_id)
        return float(self._best[domain_id][class_index])

    def candidates(self, domain_id: int, class_index: int) -> List[torch.Tensor]:
        self._check_domain(domain_id)
        return [vector.clone() for vector in self._candidates[(domain_id, class_index)]]

    def matrix(self, domain_id: int) -> torch.Tensor:
        """
        M^d for scoring.

        Raises:
            BankNotReadyError: some class row of the domain is still absent
        """
        self._check_domain(domain_id)
        if not self.is_ready(domain_id):
            missing = [c for c in range(self.num_classes) if not self._present[domain_id][c]]
            raise BankNotReadyError(f"domain {domain_id} has no representation for classes {missing}")
        self._record(ACCESS_READ)
        return self._reps[domain_id].clone()

    # ============== Mutation ==============

    def begin_epoch(self, epoch: int) -> None:
        self.clock = epoch

    def _record(self, access: str) -> None:
        entry = (access, self.clock)
        if not self.access_log or self.access_log[-1] != entry:
            self.access_log.append(entry)

    def _set_row(self, domain_id: int, class_index: int, vector: torch.Tensor) -> None:
        self._reps[domain_id][class_index] = vector.to(self._reps[domain_id].dtype)
        self._present[domain_id][class_index] = True

    def _raise_best(self, domain_id: int, class_index: int, confidence: float) -> None:
        if confidence > self._best[domain_id][class_index]:
            self._best[domain_id][class_index] = confidence

    # ============== Serialization ==============

    def state_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "feature_dim": self.feature_dim,
            "clock": self.clock,
            "access_log": [list(entry) for entry in self.access_log],
            "reps": {str(d): tensor.clone() for d, tensor in self._reps.items()},
            "present": {str(d): tensor.clone() for d, tensor in self._present.items()},
            "best": {str(d): tensor.clone() for d, tensor in self._best.items()},
            "candidates": {
                f"{d}:{c}": [vector.clone() for vector in vectors]
                for (d, c), vectors in self._candidates.items()
            },
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "ClassRepBank":
        domain_ids = [int(d) for d in state["reps"].keys()]
        dtype = next(iter(state["reps"].values())).dtype if state["reps"] else torch.float32
        bank = cls(int(state["num_classes"]), int(state["feature_dim"]), domain_ids, dtype=dtype)
        bank.clock = int(state["clock"])
        bank.access_log = [(str(access), int(epoch)) for access, epoch in state["access_log"]]
        for key, tensor in state["reps"].items():
            bank._reps[int(key)] = tensor.clone()
        for key, tensor in state["present"].items():
            bank._present[int(key)] = tensor.clone()
        for key, tensor in state["best"].items():
            bank._best[int(key)] = tensor.clone()
        for key, vectors in state["candidates"].items():
            domain_id, class_index = (int(part) for part in key.split(":"))
            bank._candidates[(domain_id, class_index)] = [vector.clone() for vector in vectors]
        return bank

    def copy(self) -> "ClassRepBank":
        return copy.deepcopy(self)


def _confidence_and_class(q: torch.Tensor) -> Tuple[float, int]:
    # argmax returns the first maximal index: ties go to the lowest class
    class_index = int(torch.argmax(q))
    return float(q[class_index]), class_index


def update_bank(bank: ClassRepBank, scored: Sequence, policy: RepPolicy) -> ClassRepBank:
    """
    Update class representations from one inference pass over S_u.

    Each scored sample votes for argmax q with confidence max q (the
    predictive head, never the blended score). Zero-norm features are never
    admitted.

    One: row(d, c) is replaced by the feature of this epoch's most confident
    sample for (d, c). Ensemble: a feature joins candidates(d, c) only when its
    confidence strictly exceeds best_confidence(d, c); the row is the mean of
    all candidates. Classes without samples keep their previous row.

    The bank is updated in place and returned.
    """
    policy = RepPolicy(policy)
    bank._record(ACCESS_WRITE)

    if policy == RepPolicy.ONE:
        winners: Dict[Tuple[int, int], Tuple[float, torch.Tensor]] = {}
        for item in scored:
            feature = item.feature.detach().cpu()
            if float(feature.norm()) == 0.0:
                continue
            confidence, class_index = _confidence_and_class(item.q)
            key = (item.domain_id, class_index)
            if key not in winners or confidence > winners[key][0]:
                winners[key] = (confidence, feature)
        for (domain_id, class_index), (confidence, feature) in sorted(winners.items(), key=lambda kv: kv[0]):
            bank._check_domain(domain_id)
            bank._set_row(domain_id, class_index, feature)
            bank._raise_best(domain_id, class_index, confidence)
        return bank

    touched = set()
    for item in scored:
        feature = item.feature.detach().cpu()
        if float(feature.norm()) == 0.0:
            continue
        confidence, class_index = _confidence_and_class(item.q)
        domain_id = item.domain_id
        bank._check_domain(domain_id)
        if confidence > bank._best[domain_id][class_index]:
            bank._candidates[(domain_id, class_index)].append(feature.clone())
            bank._best[domain_id][class_index] = confidence
            touched.add((domain_id, class_index))
    for domain_id, class_index in sorted(touched):
        stacked = torch.stack(bank._candidates[(domain_id, class_index)])
        bank._set_row(domain_id, class_index, stacked.mean(dim=0))
    return bank
