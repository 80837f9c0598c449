"""
Checkpoint archive: model components, optimizer, bank, set memberships and
rng state in one torch.save file.

Archives are loaded with weights_only=True, so the payload only holds
tensors, primitives, lists and dicts; structured values (configs, rng state,
summaries) are stored as JSON strings.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import torch

from src import config
from src.core.models import TrainConfig
from src.model.bundle import BackboneSpec, ModelBundle

CHECKPOINT_FORMAT_VERSION = 1
REQUIRED_KEYS = (
    "format_version",
    "config",
    "config_hash",
    "backbone_spec",
    "num_classes",
    "num_domains",
    "dual_classifier",
    "components",
    "optimizer",
    "epoch",
    "numpy_rng",
    "torch_rng",
    "bank",
    "sets",
    "last_predictions",
    "summaries",
)


class CheckpointError(Exception):
    """Raised when a checkpoint cannot be loaded or does not match the run"""
    pass


def component_payload(bundle: ModelBundle) -> Dict[str, Dict[str, Any]]:
    """component name -> its parameter names and state dict."""
    return {
        name: {
            "parameters": [param_name for param_name, _ in module.named_parameters()],
            "state": module.state_dict(),
        }
        for name, module in bundle.components().items()
    }


def restore_components(bundle: ModelBundle, components: Dict[str, Dict[str, Any]]) -> None:
    present = bundle.components()
    if set(present) != set(components):
        raise CheckpointError(
            f"checkpoint components {sorted(components)} do not match the model's {sorted(present)}"
        )
    for name, module in present.items():
        try:
            module.load_state_dict(components[name]["state"])
        except (RuntimeError, KeyError) as e:
            raise CheckpointError(f"cannot restore {name}: {e}") from e


def save_checkpoint(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    """Atomic save: write to a temporary file, then replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, temp_path)
    temp_path.replace(path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Load and structurally validate an archive.

    Raises:
        CheckpointError: missing file, unreadable archive or missing keys
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"corrupt checkpoint archive {path}: {e}") from e
    if not isinstance(payload, dict):
        raise CheckpointError(f"corrupt checkpoint archive {path}: unexpected payload type")
    missing = [key for key in REQUIRED_KEYS if key not in payload]
    if missing:
        raise CheckpointError(f"corrupt checkpoint archive {path}: missing {missing}")
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {payload['format_version']}")
    return payload


def check_config_hash(payload: Dict[str, Any], train_config: TrainConfig) -> None:
    current = train_config.config_hash()
    if payload["config_hash"] != current:
        raise CheckpointError(config.ERROR_CONFIG_HASH_MISMATCH.format(stored=payload["config_hash"], current=current))


def load_bundle(path: Union[str, Path]) -> Tuple[ModelBundle, TrainConfig]:
    """Rebuild the trained bundle (eval mode) and its config from an archive."""
    payload = load_checkpoint(path)
    train_config = TrainConfig.model_validate_json(payload["config"])
    spec = BackboneSpec.model_validate_json(payload["backbone_spec"])
    bundle = ModelBundle(
        spec,
        num_classes=int(payload["num_classes"]),
        num_domains=int(payload["num_domains"]),
        dual_classifier=bool(payload["dual_classifier"]),
    )
    restore_components(bundle, payload["components"])
    bundle.eval()
    return bundle, train_config


def _feed(digest: Any, value: Any) -> None:
    if isinstance(value, torch.Tensor):
        tensor = value.detach().cpu().contiguous()
        digest.update(f"tensor:{tensor.dtype}:{tuple(tensor.shape)}".encode())
        digest.update(tensor.numpy().tobytes() if tensor.dtype != torch.bfloat16 else tensor.float().numpy().tobytes())
    elif isinstance(value, dict):
        digest.update(b"{")
        for key in sorted(value, key=str):
            digest.update(str(key).encode())
            _feed(digest, value[key])
        digest.update(b"}")
    elif isinstance(value, (list, tuple)):
        digest.update(b"[")
        for item in value:
            _feed(digest, item)
        digest.update(b"]")
    else:
        digest.update(repr(value).encode())


def checkpoint_digest(payload: Dict[str, Any]) -> str:
    """SHA-256 over the archive contents, independent of zip container details."""
    digest = hashlib.sha256()
    _feed(digest, payload)
    return digest.hexdigest()


def dump_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True)
