"""
Reports over finished runs.

Reads one or more metrics logs and writes:
- curves.csv / curves.svg: per-epoch pseudo-label accuracy, coverage and
  target accuracy for every run
- comparison.csv / comparison.txt: final target and pseudo-label accuracy
  per arm, mean over seeds
- policy.csv / policy.txt: One vs Ensemble class representation

Output is a pure function of the logs; rerunning gives identical bytes.
"""

import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
from pydantic import BaseModel, Field

from src import config
from src.core.models import RepPolicy
from src.experiments.arms import ARM_ORDER, arm_label
from src.trainer.metrics import read_metrics
from src.utils.console import log_info, log_success

TAG = "REPORT"
MISSING = "n/a"
SVG_HASH_SALT = "dualpl-report"

CURVE_COLUMNS = ["run", "arm", "seed", "epoch", "pseudo_label_accuracy", "pseudo_label_coverage", "target_accuracy"]
COMPARISON_COLUMNS = ["arm", "method", "runs", "target_accuracy", "pseudo_label_accuracy", "sources"]
POLICY_COLUMNS = ["policy", "runs", "target_accuracy", "pseudo_label_accuracy", "sources"]
POLICY_ARMS = {"ours", "policy-one"}


class ReportError(Exception):
    """Raised when metrics logs cannot be reported together"""
    pass


class RunLog(BaseModel):
    """One run's manifest record and epoch records."""

    run: str
    arm: str
    seed: int
    num_classes: int
    config: Dict[str, Any]
    epochs: List[Dict[str, Any]] = Field(default_factory=list)

    @property
    def final(self) -> Optional[Dict[str, Any]]:
        return self.epochs[-1] if self.epochs else None

    def final_value(self, key: str) -> Optional[float]:
        if self.final is None:
            return None
        value = self.final.get(key)
        return None if value is None else float(value)


def resolve_metrics_path(path: Union[str, Path]) -> Path:
    """A run directory or a metrics file."""
    path = Path(path)
    if path.is_dir():
        path = path / config.METRICS_FILE_NAME
    if not path.is_file():
        raise ReportError(f"no metrics log at {path}")
    return path


def load_run_log(path: Union[str, Path]) -> RunLog:
    metrics_path = resolve_metrics_path(path)
    records = read_metrics(metrics_path)
    manifests = [record for record in records if record.get("kind") == config.RECORD_KIND_MANIFEST]
    if not manifests:
        raise ReportError(f"{metrics_path} has no manifest record")
    for record in records:
        if record.get("schema_version") != config.METRICS_SCHEMA_VERSION:
            raise ReportError(
                f"{metrics_path} has schema_version {record.get('schema_version')}, "
                f"expected {config.METRICS_SCHEMA_VERSION}"
            )

    manifest = manifests[0]
    run_config = manifest.get("config", {})
    epochs = sorted(
        (record for record in records if record.get("kind") == config.RECORD_KIND_EPOCH),
        key=lambda record: record["epoch"],
    )
    return RunLog(
        run=metrics_path.parent.name,
        arm=str(manifest.get("arm", "ours")),
        seed=int(run_config.get("seed", 0)),
        num_classes=int(run_config.get("num_classes", 0)),
        config=run_config,
        epochs=epochs,
    )


def load_run_logs(paths: Sequence[Union[str, Path]]) -> List[RunLog]:
    """
    Load and check a set of logs.

    Raises:
        ReportError: no logs, or logs that disagree on the number of classes
    """
    if not paths:
        raise ReportError("at least one metrics log is required")
    logs = sorted((load_run_log(path) for path in paths), key=lambda log: (log.arm, log.seed, log.run))
    class_counts = sorted({log.num_classes for log in logs})
    if len(class_counts) > 1:
        raise ReportError(f"refusing to compare runs with different class counts: {class_counts}")
    return logs


# ============================================================================
# TABLES
# ============================================================================

def _mean(values: List[Optional[float]]) -> float:
    known = [value for value in values if value is not None]
    return sum(known) / len(known) if known else math.nan


def curves_frame(logs: Sequence[RunLog]) -> pd.DataFrame:
    rows = [
        {
            "run": log.run,
            "arm": log.arm,
            "seed": log.seed,
            "epoch": int(record["epoch"]),
            "pseudo_label_accuracy": record.get("pseudo_label_accuracy"),
            "pseudo_label_coverage": record.get("pseudo_label_coverage"),
            "target_accuracy": record.get("target_accuracy"),
        }
        for log in logs
        for record in log.epochs
    ]
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def _arm_sort_key(arm: str) -> tuple:
    return (ARM_ORDER.index(arm), arm) if arm in ARM_ORDER else (len(ARM_ORDER), arm)


def comparison_frame(logs: Sequence[RunLog]) -> pd.DataFrame:
    """Final-epoch accuracies per arm; `sources` lists the runs behind each row."""
    by_arm: Dict[str, List[RunLog]] = {}
    for log in logs:
        by_arm.setdefault(log.arm, []).append(log)
    rows = []
    for arm in sorted(by_arm, key=_arm_sort_key):
        group = by_arm[arm]
        rows.append({
            "arm": arm,
            "method": arm_label(arm),
            "runs": len(group),
            "target_accuracy": _mean([log.final_value("target_accuracy") for log in group]),
            "pseudo_label_accuracy": _mean([log.final_value("pseudo_label_accuracy") for log in group]),
            "sources": ";".join(log.run for log in group),
        })
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def policy_frame(logs: Sequence[RunLog]) -> pd.DataFrame:
    """One vs Ensemble over the full-method runs; a policy with no runs is omitted."""
    rows = []
    for policy, name in ((RepPolicy.ONE, "One"), (RepPolicy.ENSEMBLE, "Ensemble")):
        group = [
            log for log in logs
            if log.arm in POLICY_ARMS and log.config.get("rep_policy") == policy.value
        ]
        if not group:
            continue
        rows.append({
            "policy": name,
            "runs": len(group),
            "target_accuracy": _mean([log.final_value("target_accuracy") for log in group]),
            "pseudo_label_accuracy": _mean([log.final_value("pseudo_label_accuracy") for log in group]),
            "sources": ";".join(log.run for log in group),
        })
    return pd.DataFrame(rows, columns=POLICY_COLUMNS)


def format_table(frame: pd.DataFrame) -> str:
    """Fixed-width text; missing values print as n/a."""
    if frame.empty:
        return " ".join(frame.columns) + "\n"
    shown = frame.copy()
    for column in shown.columns:
        if pd.api.types.is_float_dtype(shown[column]):
            shown[column] = [MISSING if pd.isna(value) else f"{value:.4f}" for value in shown[column]]
    shown = shown.fillna(MISSING)
    return shown.to_string(index=False) + "\n"


def write_table(frame: pd.DataFrame, output_dir: Path, stem: str) -> List[Path]:
    csv_path = output_dir / f"{stem}.csv"
    text_path = output_dir / f"{stem}.txt"
    frame.to_csv(csv_path, index=False, float_format="%.6f", na_rep=MISSING, lineterminator="\n")
    text_path.write_text(format_table(frame), encoding="utf-8")
    return [csv_path, text_path]


# ============================================================================
# PLOTS
# ============================================================================

def plot_curves(frame: pd.DataFrame, path: Path) -> Path:
    """Pseudo-label accuracy and target accuracy per epoch, one line per run."""
    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    fig, ax = plt.subplots(1, 2, figsize=(10, 4))
    for run, group in frame.groupby("run", sort=True):
        label = f"{arm_label(group['arm'].iloc[0])} (seed {group['seed'].iloc[0]})"
        pseudo = group.dropna(subset=["pseudo_label_accuracy"])
        if not pseudo.empty:
            ax[0].plot(pseudo["epoch"], pseudo["pseudo_label_accuracy"], label=label)
        target = group.dropna(subset=["target_accuracy"])
        if not target.empty:
            ax[1].plot(target["epoch"], target["target_accuracy"], label=label)
    ax[0].set_title("Pseudo-label accuracy")
    ax[1].set_title("Target accuracy")
    for axis in ax:
        axis.set_xlabel("epoch")
        if axis.get_legend_handles_labels()[0]:
            axis.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def write_report(paths: Sequence[Union[str, Path]], output_dir: Union[str, Path]) -> List[Path]:
    """Write all report files for the given runs and return their paths."""
    logs = load_run_logs(paths)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    log_info(TAG, f"reporting {len(logs)} runs into {output_dir}")

    curves = curves_frame(logs)
    written = write_table(curves, output_dir, "curves")
    written.append(plot_curves(curves, output_dir / "curves.svg"))
    written.extend(write_table(comparison_frame(logs), output_dir, "comparison"))
    written.extend(write_table(policy_frame(logs), output_dir, "policy"))

    log_success(TAG, f"wrote {len(written)} files")
    return written
