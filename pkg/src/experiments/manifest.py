"""
Run manifest: everything needed to reproduce one run.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import BaseModel, Field

from src import config
from src.core.models import TrainConfig

SOURCE_ROOT = Path(__file__).resolve().parents[1]


def code_hash(root: Union[str, Path] = SOURCE_ROOT) -> str:
    """SHA-256 over every .py file under the package, in sorted path order."""
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*.py")):
        if "__pycache__" in path.parts:
            continue
        digest.update(path.relative_to(root).as_posix().encode("utf-8"))
        digest.update(b"\0")
        digest.update(path.read_bytes())
        digest.update(b"\0")
    return digest.hexdigest()


class RunOutputs(BaseModel):
    metrics: str
    checkpoint: str
    report: str


class RunManifest(BaseModel):
    """Config, dataset descriptor, code version and output paths of one run."""

    app: str = config.APP_NAME
    app_version: str = config.APP_VERSION
    arm: str
    seed: int
    config: TrainConfig
    config_hash: str
    dataset: Dict[str, Any] = Field(default_factory=dict)
    code_hash: str
    outputs: RunOutputs

    @classmethod
    def for_run(cls, arm: str, train_config: TrainConfig, dataset: Dict[str, Any],
                run_dir: Union[str, Path]) -> "RunManifest":
        run_dir = Path(run_dir)
        return cls(
            arm=arm,
            seed=train_config.seed,
            config=train_config,
            config_hash=train_config.config_hash(),
            dataset=dataset,
            code_hash=code_hash(),
            outputs=RunOutputs(
                metrics=str(run_dir / config.METRICS_FILE_NAME),
                checkpoint=str(run_dir / config.CHECKPOINT_FILE_NAME),
                report=str(run_dir / config.REPORT_FILE_NAME),
            ),
        )

    def write(self, run_dir: Union[str, Path]) -> Path:
        path = Path(run_dir) / config.MANIFEST_FILE_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path
