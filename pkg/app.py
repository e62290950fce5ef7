"""
Class-incremental novel class discovery - command-line entry point

Subcommands
- pretrain: supervised stage on the labelled classes
- discover: one discovery step from a pretrain (or earlier discover) directory
- eval: score a checkpoint under either evaluation protocol
- grid: every ablation arm from one shared pretrained model
- steps: pretrain plus every discovery step of a multi-step task
- make-reference: hand-built oracle / swap checkpoints for protocol checks
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src import __version__
from src.analysis import analyze_eval_report
from src.datagen import PROFILES, LabeledSet, SplitSet, TaskSpec, generate, ingest_csv
from src.errors import ConfigurationError, FrostError, LookupFailure, ParseError, ValidationError
from src.evaluation import CLASS_INCD, ORIGINAL_RT, PROTOCOLS, REFERENCE_KINDS, EvalReport, build_reference_bundle, evaluate
from src.model import ModelBundle, load_checkpoint, save_checkpoint
from src.prototypes import PrototypeStore, load_prototypes, save_prototypes
from src.reporting import (
    export_workbook,
    grid_table,
    steps_table,
    write_confusion,
    write_html_report,
    write_json_report,
    write_loss_history,
    write_norms,
    write_table,
)
from src.trainer import (
    ARM_NAMES,
    RunConfig,
    RunRecord,
    TrainConfig,
    discover,
    incremental_step,
    load_config,
    pretrain_supervised,
    resolve_arm,
    run_ablation_grid,
    run_steps,
)
from src.utils import LOG_LEVEL_ENV, format_percent, log_level, read_json, require_artifact, route_artifacts, write_json

logger = logging.getLogger("frost")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

CHECKPOINT = "checkpoint.json"
PROTOTYPES = "prototypes.json"
MANIFEST = "manifest.json"
REFERENCE_NOISE = 0.01


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def configure_logging(level: Optional[str]) -> None:
    logging.basicConfig(
        level=getattr(logging, log_level(level)),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def ablation_name(value: str) -> str:
    try:
        return resolve_arm(value)
    except LookupFailure as e:
        raise argparse.ArgumentTypeError(str(e))


def resolve_run_config(config: Optional[str], seed: Optional[int], fallback: Optional[Path] = None) -> RunConfig:
    """--config wins; otherwise a manifest in `fallback`; otherwise defaults."""
    if config:
        return load_config(config, seed_override=seed)
    if fallback is not None and (fallback / MANIFEST).is_file():
        return load_config(fallback / MANIFEST, seed_override=seed)
    return RunConfig.default(seed=seed or 0)


def training_config(run: RunConfig, progress: bool) -> TrainConfig:
    return replace(run.train, show_progress=True) if progress else run.train


def encode_mappings(mappings: Sequence[Dict[int, int]]) -> List[Dict[str, int]]:
    return [{str(k): int(v) for k, v in sorted(mp.items())} for mp in mappings]


def decode_mappings(raw: Sequence[Dict[str, Any]]) -> List[Dict[int, int]]:
    try:
        return [{int(k): int(v) for k, v in mp.items()} for mp in raw]
    except (AttributeError, TypeError, ValueError) as e:
        raise ParseError(f"malformed cluster mappings in manifest: {e}") from e


def write_manifest(out: Path, command: str, run: RunConfig, artifacts: Dict[str, str], **extra) -> Path:
    """Everything a rerun needs; no timestamps so reruns are byte-identical."""
    payload = {
        "tool_version": __version__,
        "command": command,
        "seed": run.seed,
        "config": run.to_dict(),
        "artifacts": dict(sorted(artifacts.items())),
    }
    payload.update(extra)
    return write_json(out / MANIFEST, payload)


def write_step_outputs(out: Path, m: ModelBundle, store: Optional[PrototypeStore],
                       history: Sequence[RunRecord], record: RunRecord) -> Dict[str, str]:
    """Checkpoint, prototypes, losses, both reports and the per-report tables of one step."""
    artifacts = {"checkpoint": CHECKPOINT, "losses": "losses.csv"}
    save_checkpoint(m, out / CHECKPOINT)
    if store is not None:
        save_prototypes(store, out / PROTOTYPES)
        artifacts["prototypes"] = PROTOTYPES
    write_loss_history(history, out / "losses.csv")

    for protocol, report in sorted(record.reports.items()):
        name = f"report_{protocol}.json"
        write_json_report(report, out / name, arm=record.arm, step=record.step + 1)
        artifacts[f"report_{protocol}"] = name

    incd = record.reports[CLASS_INCD]
    write_confusion(incd, out / "confusion.csv")
    write_norms(incd.head_norms, out / "norms.csv", incd.num_old)
    diagnostics = analyze_eval_report(incd, other_report=record.reports.get(ORIGINAL_RT))
    write_html_report(
        out / "report.html", record.reports, history, diagnostics,
        title=f"Discovery step {record.step + 1} ({record.arm})",
        subtitle=f"{m.num_old} old and {m.num_new} new classes",
    )
    artifacts.update({"confusion": "confusion.csv", "norms": "norms.csv", "html": "report.html"})
    return artifacts


def print_report(report: EvalReport) -> None:
    print(f"{report.protocol:<12} Old {format_percent(report.old_acc):>7}  "
          f"New {format_percent(report.new_acc):>7}  All {format_percent(report.all_acc):>7}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_pretrain(args: argparse.Namespace) -> int:
    run = resolve_run_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    splits = generate(run.task)
    m, store, record = pretrain_supervised(splits, training_config(run, args.progress))
    save_checkpoint(m, out / CHECKPOINT)
    save_prototypes(store, out / PROTOTYPES)
    write_loss_history([record], out / "losses.csv")
    write_manifest(
        out, "pretrain", run,
        {"checkpoint": CHECKPOINT, "prototypes": PROTOTYPES, "losses": "losses.csv"},
        mappings=[], data_digest=splits.digest(), train_accuracy=round(record.train_accuracy, 4),
    )
    print(f"pretrain: train accuracy {format_percent(record.train_accuracy)} on {m.num_old} classes")
    return EXIT_OK


def load_stage(directory: Path) -> Tuple[ModelBundle, Optional[PrototypeStore], List[Dict[int, int]]]:
    """Checkpoint, optional prototypes and frozen mappings of a run directory."""
    routed = route_artifacts(directory)
    names = {a.name for kind in routed.values() for a in kind}
    if CHECKPOINT not in names:
        raise LookupFailure(f"{CHECKPOINT} missing from run directory {directory}")
    m = load_checkpoint(directory / CHECKPOINT)
    store = load_prototypes(directory / PROTOTYPES) if PROTOTYPES in names else None
    mappings: List[Dict[int, int]] = []
    if MANIFEST in names:
        mappings = decode_mappings(read_json(directory / MANIFEST).get("mappings", []))
    return m, store, mappings


def cmd_discover(args: argparse.Namespace) -> int:
    source = Path(args.source)
    run = resolve_run_config(args.config, args.seed, fallback=source)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    m, store, mappings = load_stage(source)
    splits = generate(run.task)
    if m.input_dim != splits.spec.input_dim:
        raise ValidationError(f"checkpoint expects {m.input_dim} input features, task has {splits.spec.input_dim}")
    step = len(m.step_sizes)
    if step >= splits.spec.num_steps:
        raise ValidationError(f"task has {splits.spec.num_steps} discovery step(s) and all of them are done")
    if m.num_all != splits.spec.step_offset(step):
        raise ValidationError(f"checkpoint knows {m.num_all} classes, step {step + 1} starts at {splits.spec.step_offset(step)}")

    cfg = training_config(run, args.progress).with_arm(args.ablation)
    if step == 0:
        m, record = discover(m, store, splits, cfg, step=0, arm=args.ablation)
    else:
        m, store, record = incremental_step(m, store, splits, cfg, step, arm=args.ablation,
                                            frozen_mappings=mappings[:step])

    artifacts = write_step_outputs(out, m, store, [record], record)
    write_manifest(
        out, "discover", run, artifacts,
        ablation=args.ablation, step=step + 1, mappings=encode_mappings(record.mappings),
        data_digest=splits.digest(), start_digest=record.start_digest,
    )
    for protocol in PROTOCOLS:
        if protocol in record.reports:
            print_report(record.reports[protocol])
    return EXIT_OK


def eval_data(spec: Optional[str], m: ModelBundle, manifest: Dict[str, Any]) -> Tuple[LabeledSet, LabeledSet]:
    """
    Test sets for the latest step of m.

    spec is a profile name, a config/manifest path, or csv:old=PATH,new=PATH;
    without it the task recorded in the model directory's manifest is used.
    """
    steps_done = len(m.step_sizes)
    if spec and spec.startswith("csv:"):
        parts = dict(item.split("=", 1) for item in spec[4:].split(",") if "=" in item)
        if set(parts) != {"old", "new"}:
            raise ConfigurationError("data", "expected csv:old=PATH,new=PATH")
        test_old = ingest_csv(parts["old"], m.input_dim, range(0, m.num_old))
        test_new = ingest_csv(parts["new"], m.input_dim, range(m.num_old, m.num_all), first_id=len(test_old))
        return test_old, test_new

    if spec in PROFILES:
        task = TaskSpec.from_profile(spec, seed=manifest.get("seed", 0))
    elif spec:
        task = load_config(spec).task
    elif manifest:
        if not isinstance(manifest.get("config"), dict):
            raise ConfigurationError("config", "the model directory's manifest has no config section")
        task = RunConfig.from_dict(manifest["config"]).task
    else:
        raise ConfigurationError("data", "no --data given and the model directory has no manifest")

    splits: SplitSet = generate(task)
    if task.input_dim != m.input_dim or steps_done > task.num_steps or task.step_offset(steps_done) != m.num_all:
        raise ValidationError("data task does not match the checkpoint's classes or input width")
    step = steps_done - 1
    return splits.known_test(step), splits.test_new[step]


def cmd_eval(args: argparse.Namespace) -> int:
    model_dir = Path(args.model)
    m = load_checkpoint(require_artifact(model_dir, CHECKPOINT))
    manifest = read_json(model_dir / MANIFEST) if (model_dir / MANIFEST).is_file() else {}
    if not m.step_sizes:
        raise ValidationError("checkpoint has no discovery step to evaluate")
    mappings = decode_mappings(manifest.get("mappings", []))[:len(m.step_sizes) - 1]

    test_old, test_new = eval_data(args.data, m, manifest)
    report = evaluate(m, test_old, test_new, args.protocol, mappings)
    out = Path(args.out) if args.out else model_dir
    write_json_report(report, out / f"report_{args.protocol}.json")
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    run = resolve_run_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    result = run_ablation_grid(run.task, training_config(run, args.progress), arms=args.arms or ARM_NAMES)
    table = grid_table(result.records())
    write_table(table, out / "grid.csv", float_format="%.4f")
    write_loss_history([result.pretrain], out / "losses.csv")
    artifacts = {"grid": "grid.csv", "losses": "losses.csv", "html": "report.html"}
    full = result.arms.get("full")
    reports = full.record.reports if full is not None else {}
    diagnostics = analyze_eval_report(reports[CLASS_INCD], other_report=reports.get(ORIGINAL_RT)) if reports else None
    write_html_report(out / "report.html", reports, [result.pretrain], diagnostics,
                      title="Ablation grid", subtitle=f"{len(table)} arms", tables={"Ablation grid": table})
    if args.xlsx:
        export_workbook({"grid": table}, out / "grid.xlsx")
        artifacts["workbook"] = "grid.xlsx"
    write_manifest(out, "grid", run, artifacts, arms=list(table["arm"]))
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_steps(args: argparse.Namespace) -> int:
    run = resolve_run_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    result = run_steps(run.task, training_config(run, args.progress), arm=args.ablation)
    table = steps_table(result.rows)
    last = result.steps[-1]
    artifacts = write_step_outputs(out, result.model, result.store, [result.pretrain] + result.steps, last)
    write_table(table, out / "steps.csv", float_format="%.4f")
    write_html_report(
        out / "report.html", last.reports, [result.pretrain] + result.steps,
        analyze_eval_report(last.reports[CLASS_INCD], other_report=last.reports.get(ORIGINAL_RT)),
        title=f"Multi-step run ({args.ablation})", tables={"Per-step accuracy": table},
    )
    artifacts["steps"] = "steps.csv"
    if args.xlsx:
        export_workbook({"steps": table}, out / "steps.xlsx")
        artifacts["workbook"] = "steps.xlsx"
    write_manifest(out, "steps", run, artifacts, ablation=args.ablation, mappings=encode_mappings(last.mappings))
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_make_reference(args: argparse.Namespace) -> int:
    task = TaskSpec.from_profile(args.profile, seed=args.seed, noise=args.noise)
    run = RunConfig(args.seed, task, TrainConfig(seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m = build_reference_bundle(task, args.kind)
    save_checkpoint(m, out / CHECKPOINT)
    write_manifest(out, "make-reference", run, {"checkpoint": CHECKPOINT}, kind=args.kind, mappings=[])
    print(f"{args.kind} reference checkpoint for {args.profile} written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=None, help=f"DEBUG, INFO, WARNING (default, or ${LOG_LEVEL_ENV})")
    common.add_argument("--progress", action="store_true", help="show progress bars on stderr")

    parser = argparse.ArgumentParser(prog="app.py", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", parents=[common], help="supervised stage on the labelled classes")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_pretrain)

    p = sub.add_parser("discover", parents=[common], help="one discovery step")
    p.add_argument("--config")
    p.add_argument("--from", dest="source", required=True, help="pretrain or discover output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", type=ablation_name, default="full", help=", ".join(ARM_NAMES))
    p.set_defaults(handler=cmd_discover)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--model", required=True, help="directory holding checkpoint.json")
    p.add_argument("--data", help="profile name, config path, or csv:old=PATH,new=PATH")
    p.add_argument("--protocol", choices=PROTOCOLS, default=CLASS_INCD)
    p.add_argument("--out", help="directory for the report (default: the model directory)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("grid", parents=[common], help="all ablation arms from one pretrained model")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--arms", type=ablation_name, nargs="+")
    p.add_argument("--xlsx", action="store_true", help="also write grid.xlsx")
    p.set_defaults(handler=cmd_grid)

    p = sub.add_parser("steps", parents=[common], help="pretrain and every discovery step")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", type=ablation_name, default="full")
    p.add_argument("--xlsx", action="store_true", help="also write steps.xlsx")
    p.set_defaults(handler=cmd_steps)

    p = sub.add_parser("make-reference", parents=[common], help="hand-built oracle or swap checkpoint")
    p.add_argument("--kind", choices=REFERENCE_KINDS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=sorted(PROFILES), default="p5-5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=REFERENCE_NOISE)
    p.set_defaults(handler=cmd_make_reference)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
        return args.handler(args)
    except (ConfigurationError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FrostError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
