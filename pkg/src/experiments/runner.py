"""
Single runs and sweeps.

A sweep runs every grid point for every seed. Failures are caught per run
and reported at the end; with workers > 1 runs execute in a process pool,
each worker rebuilding the dataset from its descriptor.
"""

import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel

from src import config
from src.core.models import TrainConfig
from src.data.bundle import DatasetBundle
from src.experiments.arms import apply_arm, arm_label
from src.experiments.manifest import RunManifest
from src.experiments.runconfig import GridPoint, load_dataset
from src.trainer.service import EpochSummary, train
from src.utils.console import log_error, log_info, log_success

TAG = "RUNNER"
ALPHA_LABEL_PREFIX = "alpha="
SENSITIVITY_METRICS = ["target_accuracy", "pseudo_label_accuracy"]


class RunResult(BaseModel):
    """Outcome of one run."""

    label: str
    arm: str
    seed: int
    run_dir: str
    ok: bool = True
    error: Optional[str] = None
    target_accuracy: Optional[float] = None
    pseudo_label_accuracy: Optional[float] = None
    pseudo_set_size: Optional[int] = None


def final_report_text(manifest: RunManifest, summaries: List[EpochSummary]) -> str:
    lines = [
        f"{config.APP_NAME} run report",
        f"arm: {arm_label(manifest.arm)} ({manifest.arm})",
        f"seed: {manifest.seed}",
        f"config_hash: {manifest.config_hash}",
        f"code_hash: {manifest.code_hash}",
        f"epochs: {len(summaries)}",
    ]
    if summaries:
        last = summaries[-1]
        lines.append(f"target_accuracy: {_fmt(last.target_accuracy)}")
        lines.append(f"pseudo_label_accuracy: {_fmt(last.pseudo_label_accuracy)}")
        lines.append(f"pseudo_label_coverage: {last.pseudo_label_coverage:.4f}")
        lines.append(f"pseudo_set_size: {last.pseudo_set_size}")
    return "\n".join(lines) + "\n"


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def run_single(
    train_config: TrainConfig,
    data: DatasetBundle,
    run_dir: Union[str, Path],
    arm: str = "ours",
    resume_from: Optional[Union[str, Path]] = None
) -> List[EpochSummary]:
    """Train one arm: writes manifest, metrics log, checkpoint and report."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.for_run(arm, train_config, data.summary(), run_dir)
    manifest.write(run_dir)
    _, summaries = train(
        train_config,
        data,
        output_dir=run_dir,
        resume_from=resume_from,
        run_info={"arm": arm, "code_hash": manifest.code_hash},
    )
    Path(manifest.outputs.report).write_text(final_report_text(manifest, summaries), encoding="utf-8")
    return summaries


def _run_grid_task(task: Dict[str, Any]) -> RunResult:
    """Process-pool entry point; everything it needs is in the task dict."""
    point = GridPoint(**task["point"])
    seed = task["seed"]
    run_dir = Path(task["run_dir"])
    try:
        data = task.get("data") or load_dataset(task["dataset_values"], task["synthetic_values"])
        base = TrainConfig.model_validate_json(task["base_config"])
        run_config = apply_arm(base, point.arm).with_overrides(seed=seed, **point.overrides)
        summaries = run_single(run_config, data, run_dir, arm=point.arm)
        last = summaries[-1] if summaries else None
        return RunResult(
            label=point.label,
            arm=point.arm,
            seed=seed,
            run_dir=str(run_dir),
            target_accuracy=last.target_accuracy if last else None,
            pseudo_label_accuracy=last.pseudo_label_accuracy if last else None,
            pseudo_set_size=last.pseudo_set_size if last else None,
        )
    except Exception as e:
        return RunResult(
            label=point.label,
            arm=point.arm,
            seed=seed,
            run_dir=str(run_dir),
            ok=False,
            error=f"{type(e).__name__}: {e}\n{traceback.format_exc(limit=3)}",
        )


def _run_dir_name(point: GridPoint, seed: int) -> str:
    safe = point.label.replace("=", "-").replace(",", "_")
    return f"{safe}_seed{seed}"


def run_sweep(
    base_config: TrainConfig,
    points: List[GridPoint],
    seeds: List[int],
    output_dir: Union[str, Path],
    dataset_values: Dict[str, str],
    synthetic_values: Dict[str, str],
    workers: int = 1,
    data: Optional[DatasetBundle] = None
) -> List[RunResult]:
    """
    Run every (point, seed) pair.

    With workers == 1 the runs are sequential and may share a preloaded
    dataset; with more workers each process reloads it.
    """
    output_dir = Path(output_dir)
    tasks = [
        {
            "point": point.model_dump(mode="json"),
            "seed": seed,
            "run_dir": str(output_dir / _run_dir_name(point, seed)),
            "base_config": base_config.model_dump_json(),
            "dataset_values": dict(dataset_values),
            "synthetic_values": dict(synthetic_values),
        }
        for point in points
        for seed in seeds
    ]
    log_info(TAG, f"{len(points)} grid points x {len(seeds)} seeds = {len(tasks)} runs")
    if not tasks:
        return []

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_grid_task, tasks))
    else:
        results = []
        for task in tasks:
            task["data"] = data
            results.append(_run_grid_task(task))

    failed = [result for result in results if not result.ok]
    for result in failed:
        log_error(TAG, f"{result.label} seed {result.seed} failed: {result.error.splitlines()[0]}")
    log_success(TAG, f"{len(results) - len(failed)}/{len(results)} runs finished")
    return results


def aggregate_results(results: List[RunResult]) -> pd.DataFrame:
    """Mean over seeds per grid point; failed runs are counted, not averaged."""
    columns = ["label", "arm", "runs", "failed", "target_accuracy", "pseudo_label_accuracy"]
    if not results:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame([result.model_dump() for result in results])
    rows = []
    for label, group in frame.groupby("label", sort=False):
        succeeded = group[group["ok"]]
        target = succeeded["target_accuracy"].dropna()
        pseudo = succeeded["pseudo_label_accuracy"].dropna()
        rows.append({
            "label": label,
            "arm": group["arm"].iloc[0],
            "runs": int(len(group)),
            "failed": int((~group["ok"]).sum()),
            "target_accuracy": float(target.mean()) if len(target) else math.nan,
            "pseudo_label_accuracy": float(pseudo.mean()) if len(pseudo) else math.nan,
        })
    return pd.DataFrame(rows, columns=columns)


def write_sweep_table(frame: pd.DataFrame, output_dir: Union[str, Path]) -> Path:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "sweep_summary.csv"
    frame.to_csv(path, index=False, float_format="%.4f", na_rep="n/a")
    return path


def alpha_sensitivity(frame: pd.DataFrame) -> pd.DataFrame:
    """
    The alpha sweep as one column per alpha value, in grid order, and one
    row per metric. Empty when the sweep has no alpha points.
    """
    if frame.empty:
        return pd.DataFrame()
    alpha_rows = frame[frame["label"].astype(str).str.startswith(ALPHA_LABEL_PREFIX)]
    if alpha_rows.empty:
        return pd.DataFrame()
    table = alpha_rows.set_index("label")[SENSITIVITY_METRICS].T
    table.columns = pd.Index([label[len(ALPHA_LABEL_PREFIX):] for label in table.columns], name="alpha")
    table.index.name = "metric"
    return table


def write_alpha_sensitivity(frame: pd.DataFrame, output_dir: Union[str, Path]) -> Optional[Path]:
    table = alpha_sensitivity(frame)
    if table.empty:
        return None
    path = Path(output_dir) / "alpha_sensitivity.csv"
    table.to_csv(path, float_format="%.4f", na_rep="n/a")
    return path
