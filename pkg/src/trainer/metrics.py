"""
Line-delimited JSON metrics log.

Every record carries schema_version and kind ("manifest", "step" or
"epoch"). The file is append-only during a run; resuming drops records of
epochs that will be re-run.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

from src import config


def _clean(value: Any) -> Any:
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {key: _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    return value


class MetricsLogger:
    """Appends structured records to metrics.jsonl."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def _append(self, kind: str, payload: Dict[str, Any]) -> None:
        record = {"schema_version": config.METRICS_SCHEMA_VERSION, "kind": kind, **_clean(payload)}
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, sort_keys=True) + "\n")

    def log_manifest(self, manifest: Dict[str, Any]) -> None:
        self._append(config.RECORD_KIND_MANIFEST, manifest)

    def log_step(self, epoch: int, step: int, losses: Dict[str, float]) -> None:
        self._append(config.RECORD_KIND_STEP, {"epoch": epoch, "step": step, "losses": losses})

    def log_epoch(self, summary: Dict[str, Any]) -> None:
        self._append(config.RECORD_KIND_EPOCH, summary)

    def reset(self) -> None:
        """Start an empty log, dropping records of an earlier run."""
        self.path.write_text("", encoding="utf-8")

    def truncate_from(self, epoch: int) -> None:
        """Drop step and epoch records with epoch >= `epoch`."""
        if not self.path.exists():
            return
        kept = [
            record for record in read_metrics(self.path)
            if record.get("kind") == config.RECORD_KIND_MANIFEST or record.get("epoch", 0) < epoch
        ]
        with self.path.open("w", encoding="utf-8") as handle:
            for record in kept:
                handle.write(json.dumps(record, sort_keys=True) + "\n")


def iter_metrics(path: Union[str, Path]) -> Iterator[Dict[str, Any]]:
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_metrics(path: Union[str, Path], kind: Optional[str] = None) -> List[Dict[str, Any]]:
    records = list(iter_metrics(path))
    if kind is None:
        return records
    return [record for record in records if record.get("kind") == kind]
