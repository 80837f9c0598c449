"""
Multi-domain dataset container.

Ground-truth classes of unlabeled-domain samples live in a HiddenLabelStore,
a separate type the trainer only hands to diagnostics. Unlabeled Samples
themselves never carry a class label.
"""

from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.models import Sample


class HiddenLabelStore:
    """sample_id -> true class for unlabeled domains. Diagnostics only."""

    __slots__ = ("_labels",)

    def __init__(self, labels: Optional[Mapping[int, int]] = None):
        self._labels: Dict[int, int] = dict(labels or {})

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, sample_id: int) -> bool:
        return sample_id in self._labels

    def __repr__(self) -> str:
        return f"HiddenLabelStore({len(self._labels)} labels)"

    def accuracy(self, pseudo_labels: Mapping[int, int]) -> Optional[float]:
        """
        Fraction of pseudo-labels matching the hidden truth.

        Returns None when the store is empty or no pseudo-labeled sample has
        a hidden label.
        """
        known = [(sample_id, label) for sample_id, label in pseudo_labels.items() if sample_id in self._labels]
        if not known:
            return None
        correct = sum(1 for sample_id, label in known if self._labels[sample_id] == label)
        return correct / len(known)

    def reveal(self, sample_ids: Iterable[int]) -> List[Optional[int]]:
        return [self._labels.get(sample_id) for sample_id in sample_ids]

    def items(self) -> List[Tuple[int, int]]:
        return sorted(self._labels.items())


class DatasetBundle(BaseModel):
    """
    Named domains with their roles.

    Domain ids follow the roles: the labeled domain is 0, unlabeled domains
    are 1..n in the listed order and the target domain (if any) is n + 1.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    domains: Dict[str, List[Sample]]
    labeled_domain: str
    unlabeled_domains: List[str] = Field(..., min_length=1)
    target_domain: Optional[str] = None
    class_names: List[str] = Field(..., min_length=2)
    ground_truth: HiddenLabelStore = Field(default_factory=HiddenLabelStore, repr=False)
    descriptor: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_roles(self) -> "DatasetBundle":
        roles = [self.labeled_domain] + list(self.unlabeled_domains)
        if self.target_domain is not None:
            roles.append(self.target_domain)
        if len(set(roles)) != len(roles):
            raise ValueError("labeled, unlabeled and target domains must be distinct")
        missing = [name for name in roles if name not in self.domains]
        if missing:
            raise ValueError(f"domains without samples entry: {missing}")

        for sample in self.domains[self.labeled_domain]:
            if sample.domain_id != 0 or sample.class_label is None:
                raise ValueError(f"labeled domain sample {sample.sample_id} must be labeled with domain id 0")
        for index, name in enumerate(self.unlabeled_domains, start=1):
            for sample in self.domains[name]:
                if sample.domain_id != index or sample.class_label is not None:
                    raise ValueError(f"unlabeled sample {sample.sample_id} must be unlabeled with domain id {index}")
        num_classes = len(self.class_names)
        for name in roles:
            for sample in self.domains[name]:
                if sample.class_label is not None and sample.class_label >= num_classes:
                    raise ValueError(f"sample {sample.sample_id} has class {sample.class_label} >= {num_classes}")
        return self

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_domains(self) -> int:
        """Outputs of the domain discriminator: labeled + unlabeled domains."""
        return 1 + len(self.unlabeled_domains)

    @property
    def target_domain_id(self) -> int:
        return self.num_domains

    def labeled_samples(self) -> List[Sample]:
        return list(self.domains[self.labeled_domain])

    def unlabeled_samples(self) -> List[Sample]:
        return [sample for name in self.unlabeled_domains for sample in self.domains[name]]

    def target_samples(self) -> List[Sample]:
        if self.target_domain is None:
            return []
        return list(self.domains[self.target_domain])

    def input_shape(self) -> Tuple[int, ...]:
        for samples in self.domains.values():
            if samples:
                return tuple(samples[0].input.shape)
        raise ValueError("dataset has no samples")

    def summary(self) -> Dict[str, Any]:
        """Descriptor recorded in run manifests."""
        return {
            **self.descriptor,
            "labeled_domain": self.labeled_domain,
            "unlabeled_domains": list(self.unlabeled_domains),
            "target_domain": self.target_domain,
            "class_names": list(self.class_names),
            "domain_sizes": {name: len(samples) for name, samples in self.domains.items()},
            "has_hidden_labels": len(self.ground_truth) > 0,
        }


def stack_inputs(samples: List[Sample]) -> np.ndarray:
    return np.stack([sample.input for sample in samples]).astype(np.float32)
