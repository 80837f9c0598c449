"""
Turn flat key=value run files (plus CLI overrides) into a TrainConfig, a
dataset and a sweep grid.

Keys are TrainConfig field names, dataset keys, synthetic_* keys and sweep
keys; anything else is rejected.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError

from src import config
from src.config import ConfigError, split_list
from src.core.models import TrainConfig
from src.data.bundle import DatasetBundle
from src.data.directory import SplitSpec, load_directory_dataset
from src.data.synthetic import SyntheticSpec, generate_synthetic

TRAIN_KEYS = frozenset(TrainConfig.model_fields)
LIST_KEYS = frozenset({"lr_decay_epochs"})
NULL_VALUES = frozenset({"", "none", "null"})


class RunSections(BaseModel):
    """A run file split by concern."""

    train: Dict[str, Any] = Field(default_factory=dict)
    dataset: Dict[str, str] = Field(default_factory=dict)
    synthetic: Dict[str, str] = Field(default_factory=dict)
    sweep: Dict[str, str] = Field(default_factory=dict)


def format_validation_error(error: ValidationError) -> str:
    """Field-level message for the first validation problem."""
    first = error.errors()[0]
    field = ".".join(str(part) for part in first.get("loc", ())) or "config"
    if first.get("type") == "missing":
        return config.ERROR_MISSING_FIELD.format(field=field)
    return config.ERROR_INVALID_FIELD.format(field=field, detail=first.get("msg", "invalid"))


def _coerce_train_value(key: str, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    if key in LIST_KEYS and raw.strip().lower() in NULL_VALUES:
        # an empty list means no decay
        return []
    if raw.strip().lower() in NULL_VALUES:
        return None
    if key in LIST_KEYS:
        return split_list(raw)
    return raw.strip()


def split_sections(values: Dict[str, str]) -> RunSections:
    sections = RunSections()
    for key, raw in values.items():
        if key in TRAIN_KEYS:
            sections.train[key] = _coerce_train_value(key, raw)
        elif key in config.DATASET_KEYS:
            sections.dataset[key] = raw
        elif key.startswith(config.SYNTHETIC_KEY_PREFIX):
            sections.synthetic[key[len(config.SYNTHETIC_KEY_PREFIX):]] = raw
        elif key in config.SWEEP_KEYS:
            sections.sweep[key] = raw
        else:
            raise ConfigError(config.ERROR_INVALID_FIELD.format(field=key, detail="unknown key"))
    return sections


def build_train_config(train_values: Dict[str, Any], num_classes: Optional[int] = None) -> TrainConfig:
    """
    Validate train values into a TrainConfig.

    num_classes defaults to the dataset's class count when the run file
    does not set it.
    """
    values = {key: value for key, value in train_values.items() if value is not None}
    if "ramp_epochs" in train_values and train_values["ramp_epochs"] is None:
        values["ramp_epochs"] = None
    if "num_classes" not in values and num_classes is not None:
        values["num_classes"] = num_classes
    try:
        return TrainConfig(**values)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e


def build_synthetic_spec(synthetic_values: Dict[str, str]) -> SyntheticSpec:
    try:
        return SyntheticSpec(**synthetic_values)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e


def infer_unlabeled_domains(data_root: str, labeled: str, target: Optional[str]) -> List[str]:
    """Every domain directory under data_root that is neither labeled nor target."""
    root = Path(data_root)
    if not root.is_dir():
        raise ConfigError(config.ERROR_INVALID_FIELD.format(field="data_root", detail=f"{root} is not a directory"))
    return sorted(path.name for path in root.iterdir() if path.is_dir() and path.name not in (labeled, target))


def load_dataset(dataset_values: Dict[str, str], synthetic_values: Dict[str, str]) -> DatasetBundle:
    """
    Synthetic benchmark (default) or a directory dataset.

    For directory datasets, unlabeled domains default to every remaining
    domain directory.
    """
    kind = dataset_values.get("dataset", "synthetic").strip().lower()
    if kind == "synthetic":
        return generate_synthetic(build_synthetic_spec(synthetic_values))
    if kind != "directory":
        raise ConfigError(config.ERROR_INVALID_FIELD.format(field="dataset", detail=f"'{kind}' is not synthetic or directory"))

    for field in ("data_root", "labeled"):
        if not dataset_values.get(field):
            raise ConfigError(config.ERROR_MISSING_FIELD.format(field=field))
    target = dataset_values.get("target") or None
    unlabeled = split_list(dataset_values.get("unlabeled", ""))
    if not unlabeled:
        unlabeled = infer_unlabeled_domains(dataset_values["data_root"], dataset_values["labeled"], target)
    try:
        split = SplitSpec(
            labeled=dataset_values["labeled"],
            unlabeled=unlabeled,
            target=target,
            image_size=dataset_values.get("image_size", config.DEFAULT_IMAGE_SIZE),
        )
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e
    return load_directory_dataset(dataset_values["data_root"], split)


# ============================================================================
# SWEEP GRID
# ============================================================================

class GridPoint(BaseModel):
    """One sweep point: a label, an arm and the config overrides it adds."""

    label: str
    arm: str
    overrides: Dict[str, Any] = Field(default_factory=dict)


def parse_seeds(raw: Optional[str]) -> List[int]:
    if raw is None:
        return list(config.DEFAULT_SEEDS)
    try:
        return [int(item) for item in split_list(raw)]
    except ValueError as e:
        raise ConfigError(config.ERROR_INVALID_FIELD.format(field="seeds", detail=str(e))) from e


def parse_gamma_delta(raw: str) -> List[Tuple[float, float]]:
    pairs = []
    for item in split_list(raw):
        parts = item.split(config.CONFIG_PAIR_SEPARATOR)
        if len(parts) != 2:
            raise ConfigError(config.ERROR_INVALID_FIELD.format(
                field="sweep_gamma_delta", detail=f"'{item}' is not gamma:delta"
            ))
        try:
            pairs.append((float(parts[0]), float(parts[1])))
        except ValueError as e:
            raise ConfigError(config.ERROR_INVALID_FIELD.format(field="sweep_gamma_delta", detail=str(e))) from e
    return pairs


def parse_floats(raw: str, field: str) -> List[float]:
    try:
        return [float(item) for item in split_list(raw)]
    except ValueError as e:
        raise ConfigError(config.ERROR_INVALID_FIELD.format(field=field, detail=str(e))) from e


def build_grid(sweep_values: Dict[str, str]) -> List[GridPoint]:
    """
    Grid points from sweep keys.

    arms, sweep_gamma_delta and sweep_alpha each contribute points; an
    empty sweep section gives an empty grid.
    """
    points: List[GridPoint] = []
    for arm in split_list(sweep_values.get("arms", "")):
        points.append(GridPoint(label=f"arm={arm}", arm=arm))
    for gamma, delta in parse_gamma_delta(sweep_values.get("sweep_gamma_delta", "")):
        points.append(GridPoint(
            label=f"gamma={gamma:g},delta={delta:g}",
            arm="ours",
            overrides={"gamma": gamma, "delta": delta},
        ))
    for alpha in parse_floats(sweep_values.get("sweep_alpha", ""), "sweep_alpha"):
        points.append(GridPoint(label=f"alpha={alpha:g}", arm="ours", overrides={"alpha": alpha}))
    return points
