"""
Command-line interface.

Subcommands:
    train   one run: manifest, metrics log, checkpoint, report
    sweep   grid x seeds, aggregated table
    report  curves and tables from metrics logs
    synth   generate the synthetic benchmark and export it as CSV
    eval    accuracy of a checkpoint on one domain

Exit codes: 0 ok, 1 run or report failure, 2 invalid configuration.
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

from src import config
from src.config import ConfigError, get_run_settings, load_config_file
from src.core.models import Sample
from src.data.bundle import DatasetBundle
from src.data.directory import SchemaError
from src.data.export import export_csv
from src.experiments.arms import ARM_OURS, ARMS, apply_arm
from src.experiments.report import ReportError, format_table, write_report
from src.experiments.runconfig import (
    build_grid,
    build_train_config,
    load_dataset,
    parse_seeds,
    split_sections,
)
from src.experiments.runner import (
    aggregate_results,
    run_single,
    run_sweep,
    write_alpha_sensitivity,
    write_sweep_table,
)
from src.trainer.checkpoint import CheckpointError, load_bundle
from src.trainer.service import NonFiniteLossError, evaluate
from src.utils.console import (
    VERBOSITY_DEBUG,
    VERBOSITY_NORMAL,
    VERBOSITY_QUIET,
    log_error,
    log_info,
    log_success,
    set_verbosity,
)

TAG = "CLI"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


# ============================================================================
# ARGUMENTS
# ============================================================================

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="flat key=value run file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one run-file key (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug output")
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only")


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data-root", type=str, default=None, help="root/<domain>/<class>/<image>")
    parser.add_argument("--labeled", type=str, default=None, help="labeled source domain")
    parser.add_argument("--unlabeled", type=str, default=None, help="comma-separated unlabeled source domains")
    parser.add_argument("--target", type=str, default=None, help="held-out target domain")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualpl",
        description="Semi-supervised domain generalization with domain-aware pseudo-labeling and dual classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one run")
    _add_common(train)
    _add_dataset_flags(train)
    train.add_argument("--ablation", type=str, default=ARM_OURS, choices=sorted(ARMS), help="named arm")
    train.add_argument("--output-dir", type=str, default=None, help="run directory")
    train.add_argument("--resume", type=str, default=None, help="checkpoint to resume from")

    sweep = sub.add_parser("sweep", help="run a grid of arms / gamma:delta pairs / alpha values over seeds")
    _add_common(sweep)
    _add_dataset_flags(sweep)
    sweep.add_argument("--output-dir", type=str, default=None, help="sweep directory")
    sweep.add_argument("--workers", type=int, default=1, help="parallel runs")
    sweep.add_argument("--seeds", type=str, default=None, help="comma-separated seeds")

    report = sub.add_parser("report", help="tables and curves from metrics logs")
    report.add_argument("logs", nargs="+", help="run directories or metrics.jsonl files")
    report.add_argument("--output-dir", type=str, default=None, help="report directory")
    report.add_argument("-v", "--verbose", action="store_true", help="debug output")
    report.add_argument("-q", "--quiet", action="store_true", help="errors only")

    synth = sub.add_parser("synth", help="generate the synthetic benchmark as CSV")
    _add_common(synth)
    synth.add_argument("--output", type=str, required=True, help="CSV path")

    evaluate_parser = sub.add_parser("eval", help="accuracy of a checkpoint on one domain")
    _add_common(evaluate_parser)
    _add_dataset_flags(evaluate_parser)
    evaluate_parser.add_argument("--checkpoint", type=str, required=True, help="checkpoint.pt")
    evaluate_parser.add_argument("--domain", type=str, default=None, help="domain name (default: target)")

    return parser


# ============================================================================
# RUN-FILE VALUES
# ============================================================================

def collect_values(args: argparse.Namespace) -> Dict[str, str]:
    """Run file, then --set overrides, then dataset flags."""
    values: Dict[str, str] = load_config_file(args.config) if args.config else {}
    for item in args.overrides:
        if config.CONFIG_KEY_VALUE_SEPARATOR not in item:
            raise ConfigError(config.ERROR_INVALID_FIELD.format(field="--set", detail=f"'{item}' is not KEY=VALUE"))
        key, value = item.split(config.CONFIG_KEY_VALUE_SEPARATOR, 1)
        values[key.strip()] = value.strip()

    flags = {
        "data_root": getattr(args, "data_root", None),
        "labeled": getattr(args, "labeled", None),
        "unlabeled": getattr(args, "unlabeled", None),
        "target": getattr(args, "target", None),
    }
    for key, value in flags.items():
        if value is not None:
            values[key] = value
    # Naming domains means a directory dataset
    if any(flags.values()) and "dataset" not in values:
        values["dataset"] = "directory"
    return values


def _set_verbosity(args: argparse.Namespace) -> None:
    if args.quiet:
        set_verbosity(VERBOSITY_QUIET)
    elif args.verbose:
        set_verbosity(VERBOSITY_DEBUG)
    else:
        set_verbosity(VERBOSITY_NORMAL)


def _default_dir(*parts: str) -> Path:
    return Path(get_run_settings().output_dir, *parts)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_train(args: argparse.Namespace) -> int:
    sections = split_sections(collect_values(args))
    data = load_dataset(sections.dataset, sections.synthetic)
    train_config = apply_arm(build_train_config(sections.train, num_classes=data.num_classes), args.ablation)
    run_dir = Path(args.output_dir) if args.output_dir else _default_dir(f"{args.ablation}_seed{train_config.seed}")

    summaries = run_single(train_config, data, run_dir, arm=args.ablation, resume_from=args.resume)
    last = summaries[-1] if summaries else None
    if last is not None and last.target_accuracy is not None:
        log_success(TAG, f"target accuracy {last.target_accuracy:.4f}")
    log_success(TAG, f"run written to {run_dir}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    sections = split_sections(collect_values(args))
    points = build_grid(sections.sweep)
    seeds = parse_seeds(args.seeds if args.seeds is not None else sections.sweep.get("seeds"))
    output_dir = Path(args.output_dir) if args.output_dir else _default_dir("sweep")

    data: Optional[DatasetBundle] = None
    num_classes: Optional[int] = None
    if points:
        data = load_dataset(sections.dataset, sections.synthetic)
        num_classes = data.num_classes
    base_config = build_train_config(sections.train, num_classes=num_classes) if points else None

    results = []
    if points:
        results = run_sweep(
            base_config,
            points,
            seeds,
            output_dir,
            dataset_values=sections.dataset,
            synthetic_values=sections.synthetic,
            workers=max(1, args.workers),
            data=data if args.workers <= 1 else None,
        )
    table = aggregate_results(results)
    path = write_sweep_table(table, output_dir)
    (output_dir / "sweep_summary.txt").write_text(format_table(table), encoding="utf-8")
    log_info(TAG, f"sweep table: {path}")
    sensitivity_path = write_alpha_sensitivity(table, output_dir)
    if sensitivity_path is not None:
        log_info(TAG, f"alpha sensitivity: {sensitivity_path}")

    failed = [result for result in results if not result.ok]
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    output_dir = Path(args.output_dir) if args.output_dir else _default_dir("report")
    for path in write_report(args.logs, output_dir):
        log_info(TAG, str(path))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    sections = split_sections(collect_values(args))
    data = load_dataset({"dataset": "synthetic"}, sections.synthetic)
    path = export_csv(data, args.output)
    log_success(TAG, f"synthetic dataset written to {path}")
    return EXIT_OK


def evaluation_samples(data: DatasetBundle, name: str) -> List[Sample]:
    """Samples of one domain with ground truth; unlabeled domains read the hidden store."""
    if name not in data.domains:
        raise ConfigError(config.ERROR_INVALID_FIELD.format(field="domain", detail=f"'{name}' is not in the dataset"))
    samples = data.domains[name]
    if name not in data.unlabeled_domains:
        return list(samples)
    truth = data.ground_truth.reveal(sample.sample_id for sample in samples)
    if any(label is None for label in truth):
        raise ConfigError(config.ERROR_INVALID_FIELD.format(field="domain", detail=f"'{name}' has no ground truth"))
    return [sample.model_copy(update={"class_label": label}) for sample, label in zip(samples, truth)]


def cmd_eval(args: argparse.Namespace) -> int:
    sections = split_sections(collect_values(args))
    bundle, train_config = load_bundle(args.checkpoint)
    data = load_dataset(sections.dataset, sections.synthetic)
    if data.num_classes != train_config.num_classes:
        raise ConfigError(config.ERROR_INVALID_FIELD.format(
            field="num_classes",
            detail=f"checkpoint has {train_config.num_classes} classes, dataset has {data.num_classes}",
        ))
    name = args.domain or data.target_domain
    if name is None:
        raise ConfigError(config.ERROR_MISSING_FIELD.format(field="domain"))
    accuracy = evaluate(bundle, evaluation_samples(data, name))
    print(f"{name}\t{accuracy:.4f}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "synth": cmd_synth,
    "eval": cmd_eval,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _set_verbosity(args)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        log_error(TAG, str(e))
        return EXIT_CONFIG
    except (CheckpointError, ReportError, SchemaError, NonFiniteLossError) as e:
        log_error(TAG, str(e))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
