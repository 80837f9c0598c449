"""
Named comparison arms. Each arm is a pure set of TrainConfig overrides, so
baselines and ablations share one training code path.
"""

from typing import Any, Dict, List

from src.config import ConfigError
from src.core.models import RepPolicy, TrainConfig

ARM_OURS = "ours"

ARMS: Dict[str, Dict[str, Any]] = {
    ARM_OURS: {},
    "no-dapl": {"use_dapl": False},
    "no-dc": {"use_dual_classifier": False},
    "baseline": {"use_dapl": False, "use_dual_classifier": False},
    "no-mixup": {"use_mixup": False},
    "mixup-all": {"mixup_all": True},
    "no-entropy": {"use_entropy": False},
    "no-advmix": {"use_adv_mix": False},
    "supone": {
        "use_pseudo_labels": False,
        "use_adversarial": False,
        "use_mixup": False,
        "use_entropy": False,
        "use_dapl": False,
    },
    "naive-pl": {"gamma": 1.0},
    "policy-one": {"rep_policy": RepPolicy.ONE},
}

ARM_LABELS: Dict[str, str] = {
    ARM_OURS: "Ours",
    "no-dapl": "Ours w/o DAPL",
    "no-dc": "Ours w/o DC",
    "baseline": "Baseline",
    "no-mixup": "w/o Mixup",
    "mixup-all": "MixupAll",
    "no-entropy": "w/o Entropy",
    "no-advmix": "w/o AdvMix",
    "supone": "SupOne",
    "naive-pl": "Naive PL",
    "policy-one": "One",
}

# Row order of the comparison table
ARM_ORDER: List[str] = list(ARMS.keys())


def arm_overrides(name: str) -> Dict[str, Any]:
    if name not in ARMS:
        raise ConfigError(f"Unknown arm '{name}'. Known arms: {', '.join(ARMS)}")
    return dict(ARMS[name])


def apply_arm(train_config: TrainConfig, name: str) -> TrainConfig:
    """Return the config with the arm's overrides applied."""
    overrides = arm_overrides(name)
    if not overrides:
        return train_config
    return train_config.with_overrides(**overrides)


def arm_label(name: str) -> str:
    return ARM_LABELS.get(name, name)
