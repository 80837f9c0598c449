"""
Directory dataset ingestion: root/<domain>/<class>/<image file>.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ConfigDict, Field

from src import config
from src.config import ConfigError
from src.core.models import Sample
from src.data.bundle import DatasetBundle, HiddenLabelStore
from src.utils.console import log_info, log_warning

TAG = "DATA"


class SchemaError(Exception):
    """Raised when domains disagree on the set of classes"""
    pass


class SplitSpec(BaseModel):
    """Which directory plays which role, plus preprocessing constants."""
    model_config = ConfigDict(frozen=True)

    labeled: str
    unlabeled: List[str] = Field(..., min_length=1)
    target: Optional[str] = None
    image_size: int = Field(config.DEFAULT_IMAGE_SIZE, ge=8)
    channel_mean: Tuple[float, float, float] = config.DEFAULT_CHANNEL_MEAN
    channel_std: Tuple[float, float, float] = config.DEFAULT_CHANNEL_STD
    max_workers: int = Field(4, ge=1)

    def roles(self) -> List[str]:
        names = [self.labeled] + list(self.unlabeled)
        if self.target is not None:
            names.append(self.target)
        return names


def list_class_files(domain_dir: Path) -> Dict[str, List[Path]]:
    """class name -> sorted image paths."""
    classes: Dict[str, List[Path]] = {}
    for class_dir in sorted(path for path in domain_dir.iterdir() if path.is_dir()):
        classes[class_dir.name] = sorted(
            path for path in class_dir.rglob("*")
            if path.is_file() and path.suffix.lower() in config.IMAGE_EXTENSIONS
        )
    return classes


def decode_image(path: Path, split: SplitSpec) -> Optional[np.ndarray]:
    """H×W×3 float32 standardized image, or None when the file is unreadable."""
    try:
        with Image.open(path) as opened:
            image = opened.convert("RGB").resize((split.image_size, split.image_size), Image.Resampling.BILINEAR)
    except (OSError, UnidentifiedImageError, ValueError):
        return None
    array = np.asarray(image, dtype=np.float32) / 255.0
    mean = np.asarray(split.channel_mean, dtype=np.float32)
    std = np.asarray(split.channel_std, dtype=np.float32)
    return (array - mean) / std


def load_directory_dataset(root: Union[str, Path], split: SplitSpec) -> DatasetBundle:
    """
    Load a multi-domain image dataset.

    Paths are sorted, so sample ids and order are identical across loads
    regardless of worker count. Unlabeled-domain classes go to the hidden
    label store.

    Raises:
        ConfigError: root or a named domain directory does not exist
        SchemaError: class sets differ across domains
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(config.ERROR_INVALID_FIELD.format(field="data_root", detail=f"{root} is not a directory"))

    layouts: Dict[str, Dict[str, List[Path]]] = {}
    for name in split.roles():
        domain_dir = root / name
        if not domain_dir.is_dir():
            raise ConfigError(config.ERROR_INVALID_FIELD.format(field="domain", detail=f"{domain_dir} not found"))
        layouts[name] = list_class_files(domain_dir)

    reference_name = split.labeled
    class_names = list(layouts[reference_name].keys())
    for name, layout in layouts.items():
        if list(layout.keys()) != class_names:
            raise SchemaError(
                f"domain '{name}' has classes {sorted(layout.keys())}, "
                f"'{reference_name}' has {class_names}"
            )
        for class_name, paths in layout.items():
            if not paths:
                log_warning(TAG, f"domain '{name}' class '{class_name}' has no images")

    domains: Dict[str, List[Sample]] = {}
    hidden: Dict[int, int] = {}
    skipped: List[str] = []
    next_id = 0
    with ThreadPoolExecutor(max_workers=split.max_workers) as pool:
        for domain_id, name in enumerate(split.roles()):
            is_unlabeled = name in split.unlabeled
            items = [
                (path, class_index)
                for class_index, class_name in enumerate(class_names)
                for path in layouts[name][class_name]
            ]
            decoded = list(pool.map(lambda item: decode_image(item[0], split), items))
            samples = []
            for (path, class_index), array in zip(items, decoded):
                if array is None:
                    log_warning(TAG, f"skipping unreadable file {path}")
                    skipped.append(str(path))
                    continue
                if is_unlabeled:
                    samples.append(Sample(sample_id=next_id, input=array, domain_id=domain_id))
                    hidden[next_id] = class_index
                else:
                    samples.append(Sample(sample_id=next_id, input=array, class_label=class_index, domain_id=domain_id))
                next_id += 1
            domains[name] = samples
            log_info(TAG, f"{name}: {len(samples)} images")

    if skipped:
        log_warning(TAG, f"{len(skipped)} unreadable files skipped")

    return DatasetBundle(
        domains=domains,
        labeled_domain=split.labeled,
        unlabeled_domains=list(split.unlabeled),
        target_domain=split.target,
        class_names=class_names,
        ground_truth=HiddenLabelStore(hidden),
        descriptor={
            "source": "directory",
            "root": str(root),
            "image_size": split.image_size,
            "channel_mean": list(split.channel_mean),
            "channel_std": list(split.channel_std),
            "skipped_files": len(skipped),
        },
    )
