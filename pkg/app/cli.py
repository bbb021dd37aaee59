"""
Command-Line Interface.

One subcommand per lab workflow.  Every run writes its artifacts to
``--output-dir`` (each stamped with the tool version and the run's config
hash), a per-run JSON log to ``<output-dir>/run.log``, and prints the
primary result (JSON or CSV) to stdout.

Exit codes: 0 on success, 2 on any validation error (malformed flags or
configs, missing input files, degenerate inputs) with a single-line
diagnostic on stderr.

Usage::

    fairdg verify-bounds --instances 1000 --seed 7
    fairdg pareto --in sweep.csv --metric eo
    fairdg sweep --config experiment.json --output-dir runs/sweep
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path
from typing import Any, Callable, NoReturn, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app import __version__
from app.errors import FairDGError, InputValidationError
from app.models.batch_models import EvalBatch, PartitionLabels
from app.models.enums import DependenceMetric, FairnessMetric, OutputFormat, Subcommand
from app.models.experiment_models import CliConfig, ExperimentConfig
from app.services import ServiceContainer, create_services
from app.services.csv_io import (
    read_dcor_input,
    read_eval_batch,
    read_tradeoff_points,
    write_csv,
    write_json,
)
from app.services.dependence import conditional_dcor, conditional_hsic, dcor, hsic
from app.services.fairness import argmax_predictions, fairness_report
from app.services.nn import predict_logits
from app.services.pareto import front_report
from app.services.synthetic import generate_synthetic
from app.services.trainer import UNIT_BOUNDS
from app.utils.audit import log_run_event
from app.utils.general import config_hash

__all__ = ["CommandResult", "build_parser", "main", "run"]

EXIT_OK: int = 0
EXIT_VALIDATION: int = 2

PROG: str = "fairdg"

_BOUND_COLUMNS = ["name", "lhs", "rhs", "slack", "seed"]
_SWEEP_COLUMNS = ["lambda", "V_eod", "V_eo", "U"]
_CURVE_COLUMNS = ["epoch", "objective", "val_accuracy", "val_eod", "val_eo", "val_objective"]
_PREDICTION_COLUMNS = ["y_true", "y_pred", "g", "d"]
_ABLATION_COLUMNS = [
    "name",
    "gamma",
    "hvi_eod",
    "hvi_eo",
    "selected_lambda",
    "selected_accuracy",
    "selected_eod",
    "selected_eo",
]


class _RunConfig(CliConfig):
    """A resolved invocation: the CLI config plus the run's identity hash."""

    seed_given: bool = False
    run_hash: str = ""


class CommandResult(BaseModel):
    """What a subcommand produced: the primary document and its tabular form."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    stem: str
    document: dict[str, Any]
    rows: list[dict[str, Any]] = Field(default_factory=list)
    columns: list[str] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors are one stderr line and exit code 2."""

    def error(self, message: str) -> NoReturn:
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {_one_line(message)}\n")


def _one_line(message: object) -> str:
    return " ".join(str(message).split())


def _bandwidth(value: str) -> Union[str, float]:
    if value == "median":
        return value
    try:
        parsed = float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'median' or a number, got {value!r}") from exc
    if parsed <= 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return parsed


def build_parser() -> argparse.ArgumentParser:
    """Parser with one sub-parser per ``Subcommand``."""
    common = _Parser(add_help=False)
    common.add_argument("--output-dir", type=Path, default=None, help="Artifact directory.")
    common.add_argument("--seed", type=int, default=None, help="Master seed (64-bit unsigned).")
    common.add_argument(
        "--format",
        choices=[f.value for f in OutputFormat],
        default=OutputFormat.JSON.value,
        help="Format of the primary result on stdout.",
    )

    parser = _Parser(prog=PROG, description="FairDG lab: bounds, estimators, fronts and training.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser(Subcommand.VERIFY_BOUNDS.value, parents=[common], help="Randomized bound harness.")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser(Subcommand.DCOR.value, parents=[common], help="Conditional dependence of two blocks.")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--metric", choices=[m.value for m in DependenceMetric], default="dcor")
    p.add_argument("--bandwidth", type=_bandwidth, default="median")

    p = sub.add_parser(Subcommand.FAIRNESS.value, parents=[common], help="Accuracy, EOD and EO.")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--n-labels", type=int, default=None)
    p.add_argument("--n-groups", type=int, default=None)

    p = sub.add_parser(Subcommand.PARETO.value, parents=[common], help="Front, HVI and selection.")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--metric", choices=[m.value for m in FairnessMetric], default="eod")
    p.add_argument("--config", type=Path, default=None, help="Experiment JSON for the front settings.")

    p = sub.add_parser(Subcommand.TRAIN.value, parents=[common], help="Two-stage training at one λ.")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)

    p = sub.add_parser(Subcommand.SWEEP.value, parents=[common], help="λ sweep on the synthetic instance.")
    p.add_argument("--config", type=Path, required=True)

    p = sub.add_parser(Subcommand.REPORT.value, parents=[common], help="Ablation and studies.")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--trend", action="store_true", help="Also run the per-seed trend study.")
    p.add_argument("--sources", action="store_true", help="Also run the source-count study.")

    return parser


# ---------------------------------------------------------------------------
# Run identity
# ---------------------------------------------------------------------------


def _file_digest(path: Path) -> str:
    if not path.is_file():
        raise InputValidationError(f"{path}: file not found.")
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _run_hash(args: argparse.Namespace) -> str:
    """Hash of the flags and input file contents; output location and format excluded."""
    identity: dict[str, Any] = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("output_dir", "format", "input", "config")
    }
    for key in ("input", "config"):
        path = getattr(args, key, None)
        if path is not None:
            identity[key] = _file_digest(path)
    return config_hash(identity)


def _load_experiment(cli: _RunConfig) -> ExperimentConfig:
    if cli.config_path is None:
        raise InputValidationError(f"{cli.subcommand} needs --config.")
    experiment = ExperimentConfig.load(cli.config_path)
    return experiment.with_seed(cli.seed) if cli.seed_given else experiment


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _verify_bounds(args: argparse.Namespace, cli: _RunConfig, services: ServiceContainer) -> CommandResult:
    if args.instances < 1:
        raise InputValidationError("--instances must be at least 1.")
    if args.threads is not None and args.threads < 1:
        raise InputValidationError("--threads must be at least 1.")
    harness = services["bound_harness"]
    reports = harness.run(args.instances, cli.seed, args.threads)
    tolerance = services["config"].BOUND_TOLERANCE
    return CommandResult(
        stem="bounds",
        document={
            "instances": args.instances,
            "seed": cli.seed,
            "violations": sum(not r.holds(tolerance) for r in reports),
            "min_slack": harness.min_slack_by_name(reports),
            "reports": [r.model_dump() for r in reports],
        },
        rows=[{col: getattr(r, col) for col in _BOUND_COLUMNS} for r in reports],
        columns=_BOUND_COLUMNS,
    )


def _dcor(args: argparse.Namespace, cli: _RunConfig, services: ServiceContainer) -> CommandResult:
    za, zb, labels = read_dcor_input(args.input)
    by_y = PartitionLabels(y=labels.y)
    document: dict[str, Any] = {"metric": args.metric, "n": za.rows}
    if args.metric == DependenceMetric.DCOR:
        document["unconditional"] = dcor(za, zb)
        document["given_y"] = conditional_dcor(za, zb, by_y).model_dump()
        if labels.d is not None:
            document["given_y_d"] = conditional_dcor(za, zb, labels).model_dump()
    else:
        document["bandwidth"] = args.bandwidth
        document["unconditional"] = hsic(za, zb, args.bandwidth)
        document["given_y"] = conditional_hsic(za, zb, by_y, args.bandwidth)
        if labels.d is not None:
            document["given_y_d"] = conditional_hsic(za, zb, labels, args.bandwidth)

    def _value(entry: Any) -> Any:
        return entry["value"] if isinstance(entry, dict) else entry

    row = {key: _value(document.get(key)) for key in ("unconditional", "given_y", "given_y_d")}
    return CommandResult(
        stem="dependence",
        document=document,
        rows=[{"metric": args.metric, **row}],
        columns=["metric", "unconditional", "given_y", "given_y_d"],
    )


def _fairness(args: argparse.Namespace, cli: _RunConfig, services: ServiceContainer) -> CommandResult:
    batch = read_eval_batch(args.input)
    if args.n_labels is not None or args.n_groups is not None:
        batch = EvalBatch(
            y_true=batch.y_true,
            y_pred=batch.y_pred,
            g=batch.g,
            d=batch.d,
            n_labels=args.n_labels,
            n_groups=args.n_groups,
        )
    report = fairness_report(batch)
    return CommandResult(
        stem="fairness",
        document=report.model_dump(),
        rows=[report.model_dump()],
        columns=list(report.model_dump().keys()),
    )


def _pareto(args: argparse.Namespace, cli: _RunConfig, services: ServiceContainer) -> CommandResult:
    metric = FairnessMetric(args.metric)
    front_cfg = ExperimentConfig.load(args.config).front if args.config is not None else None
    points = read_tradeoff_points(args.input, metric)
    report = front_report(points, front_cfg, metric=metric)
    return CommandResult(
        stem="pareto",
        document={**report.summary(), "selected_index": report.selected_index},
        rows=[p.as_row() for p in report.front],
        columns=["lambda", "V", "U"],
    )


def _train(args: argparse.Namespace, cli: _RunConfig, services: ServiceContainer) -> CommandResult:
    if not 0.0 <= args.lam < 1.0:
        raise InputValidationError(f"--lambda must lie in [0, 1), got {args.lam}.")
    experiment = _load_experiment(cli)
    trainer = services["trainer"]
    train_cfg = experiment.train
    data = generate_synthetic(experiment.synth)
    stage1 = trainer.stage1_train(data, train_cfg)
    gamma = trainer.resolve_gamma(data, stage1, train_cfg, experiment.front)
    if stage1.stack.lambda_conditioned:
        result = trainer.train_loss_conditional(data, stage1, train_cfg, gamma)
    else:
        result = trainer.stage2_train(data, stage1, train_cfg, args.lam, gamma)
    report = trainer.evaluate(result.stack, data.target, data.n_labels, data.n_groups, args.lam)

    run_hash = cli.run_hash
    checkpoint = write_json(result.stack.to_json(), cli.output_dir / "checkpoint.json", run_hash)
    log_run_event(services["logger"], "CHECKPOINT", str(checkpoint), run_hash, {"lambda": args.lam})
    write_csv(
        [r.model_dump() for r in result.curve], cli.output_dir / "curve.csv", _CURVE_COLUMNS, run_hash
    )
    predictions = argmax_predictions(predict_logits(result.stack, data.target.x, args.lam))
    write_csv(
        [
            {"y_true": int(y), "y_pred": int(p), "g": int(g), "d": int(d)}
            for y, p, g, d in zip(data.target.y, predictions, data.target.g, data.target.d)
        ],
        cli.output_dir / "target_predictions.csv",
        _PREDICTION_COLUMNS,
        run_hash,
    )

    return CommandResult(
        stem="train",
        document={
            "lambda": args.lam,
            "gamma": gamma,
            "mode": str(train_cfg.mode),
            "best_epoch": result.best_epoch,
            "stage1": stage1.model_dump(exclude={"stack"}),
            "target": report.model_dump(),
            "checkpoint": checkpoint.name,
        },
        rows=[{"lambda": args.lam, "accuracy": report.accuracy, "eod": report.eod, "eo": report.eo}],
        columns=["lambda", "accuracy", "eod", "eo"],
    )


def _sweep(args: argparse.Namespace, cli: _RunConfig, services: ServiceContainer) -> CommandResult:
    experiment = _load_experiment(cli)
    trainer = services["trainer"]
    data = generate_synthetic(experiment.synth)
    stage1 = trainer.stage1_train(data, experiment.train)
    gamma = trainer.resolve_gamma(data, stage1, experiment.train, experiment.front)
    result = trainer.sweep(data, stage1, experiment.train, gamma)
    fronts = {
        str(metric): front_report(
            result.points(metric), experiment.front, UNIT_BOUNDS, metric
        ).summary()
        for metric in FairnessMetric
    }
    return CommandResult(
        stem="sweep",
        document={
            "mode": str(result.mode),
            "gamma": gamma,
            "target": [r.model_dump(by_alias=True) for r in result.target],
            "validation": [r.model_dump(by_alias=True) for r in result.validation],
            "fronts": fronts,
        },
        rows=result.csv_rows(),
        columns=_SWEEP_COLUMNS,
    )


def _report(args: argparse.Namespace, cli: _RunConfig, services: ServiceContainer) -> CommandResult:
    experiment = _load_experiment(cli)
    trainer = services["trainer"]
    ablation = trainer.run_ablation(generate_synthetic(experiment.synth), experiment)
    document: dict[str, Any] = {"ablation": [e.model_dump() for e in ablation.entries]}
    if args.sources:
        document["source_counts"] = [
            e.model_dump() for e in trainer.source_count_study(experiment)
        ]
    if args.trend:
        document["trend"] = trainer.trend_study(experiment).model_dump()
    return CommandResult(
        stem="report",
        document=document,
        rows=[e.model_dump() for e in ablation.entries],
        columns=_ABLATION_COLUMNS,
    )


Handler = Callable[[argparse.Namespace, _RunConfig, ServiceContainer], CommandResult]

_HANDLERS: dict[Subcommand, Handler] = {
    Subcommand.VERIFY_BOUNDS: _verify_bounds,
    Subcommand.DCOR: _dcor,
    Subcommand.FAIRNESS: _fairness,
    Subcommand.PARETO: _pareto,
    Subcommand.TRAIN: _train,
    Subcommand.SWEEP: _sweep,
    Subcommand.REPORT: _report,
}

# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def _resolve(args: argparse.Namespace, services: ServiceContainer) -> _RunConfig:
    return _RunConfig(
        subcommand=Subcommand(args.subcommand),
        config_path=getattr(args, "config", None),
        output_dir=args.output_dir or Path(services["config"].DEFAULT_OUTPUT_DIR),
        seed=args.seed if args.seed is not None else 0,
        format=OutputFormat(args.format),
        seed_given=args.seed is not None,
        run_hash=_run_hash(args),
    )


def _execute(args: argparse.Namespace, cli: _RunConfig, services: ServiceContainer) -> str:
    """Run the handler, write its artifacts and return the primary output text."""
    logger = services["logger"]
    logger.info(
        "Run started",
        extra={"subcommand": str(cli.subcommand), "config_hash": cli.run_hash, "seed": cli.seed},
    )
    result = _HANDLERS[cli.subcommand](args, cli, services)

    json_path = write_json(result.document, cli.output_dir / f"{result.stem}.json", cli.run_hash)
    log_run_event(logger, "WRITE", str(json_path), cli.run_hash)
    primary = json_path
    if result.columns:
        csv_path = write_csv(
            result.rows, cli.output_dir / f"{result.stem}.csv", result.columns, cli.run_hash
        )
        log_run_event(logger, "WRITE", str(csv_path), cli.run_hash)
        if cli.format == OutputFormat.CSV:
            primary = csv_path
    logger.info("Run finished", extra={"subcommand": str(cli.subcommand)})
    return primary.read_text(encoding="utf-8")


def run(argv: Optional[Sequence[str]] = None, services: Optional[ServiceContainer] = None) -> int:
    """Parse *argv*, run the subcommand and return the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION

    services = services or create_services()
    logger = services["logger"]
    try:
        cli = _resolve(args, services)
        cli.output_dir.mkdir(parents=True, exist_ok=True)
        logger.attach_file(cli.output_dir / "run.log")
        sys.stdout.write(_execute(args, cli, services))
    except (FairDGError, ValidationError, OSError) as exc:
        logger.error("Run failed: %s", _one_line(exc))
        sys.stderr.write(f"{PROG}: error: {_one_line(exc)}\n")
        return EXIT_VALIDATION
    finally:
        logger.detach_files()
    return EXIT_OK


def main() -> NoReturn:
    sys.exit(run())
