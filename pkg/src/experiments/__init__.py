"""
Experiments: named arms, run files, sweeps, reports and the CLI.
"""

from src.experiments.arms import ARM_LABELS, ARM_ORDER, ARMS, apply_arm, arm_label, arm_overrides
from src.experiments.manifest import RunManifest, code_hash
from src.experiments.report import ReportError, load_run_logs, write_report
from src.experiments.runconfig import (
    GridPoint,
    RunSections,
    build_grid,
    build_train_config,
    load_dataset,
    split_sections,
)
from src.experiments.runner import RunResult, aggregate_results, alpha_sensitivity, run_single, run_sweep

__all__ = [
    "ARM_LABELS",
    "ARM_ORDER",
    "ARMS",
    "apply_arm",
    "arm_label",
    "arm_overrides",
    "RunManifest",
    "code_hash",
    "ReportError",
    "load_run_logs",
    "write_report",
    "GridPoint",
    "RunSections",
    "build_grid",
    "build_train_config",
    "load_dataset",
    "split_sections",
    "RunResult",
    "aggregate_results",
    "alpha_sensitivity",
    "run_single",
    "run_sweep",
]
