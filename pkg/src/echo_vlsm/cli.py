"""Command-line entry point.

Exit codes: 0 success; 1 configuration/data problems; 2 runtime failures
(stale artifacts, model/training/evaluation errors); 3 incomplete report
matrix.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import (
    ConfigError,
    DataError,
    EvaluationError,
    IncompleteMatrixError,
    ModelError,
    PromptError,
    StaleArtifactError,
    TrainingError,
    VqaError,
)
from .pipeline.config import PipelineConfig
from .pipeline.orchestrator import (
    cmd_compare,
    cmd_evaluate,
    cmd_ingest,
    cmd_prompts,
    cmd_report,
    cmd_train,
    cmd_validate,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_INCOMPLETE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echo-vlsm",
        description=(
            "Prompt-level experiments for vision-language echocardiography "
            "segmentation: ingest datasets, build prompt triplets, train, "
            "evaluate, and report."
        ),
    )
    parser.add_argument(
        "--verbose", "-v", action="store_true", help="debug-level logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_stage(name: str, help_text: str, **kwargs) -> argparse.ArgumentParser:
        stage = sub.add_parser(name, help=help_text, **kwargs)
        stage.add_argument(
            "--config", required=True, help="path to the pipeline YAML config"
        )
        return stage

    add_stage("validate", "check datasets and configuration without writing")

    ingest = add_stage("ingest", "scan datasets and write split manifests")
    ingest.add_argument("--force", action="store_true", help="rebuild even if current")

    prompts = add_stage("prompts", "materialize binary masks and prompt triplets")
    prompts.add_argument("--force", action="store_true", help="rebuild even if current")

    train = add_stage("train", "train every run in the experiment matrix")
    train.add_argument(
        "--runs",
        help="comma-separated run-slug patterns (fnmatch) to restrict training",
    )
    train.add_argument("--force", action="store_true", help="retrain even if current")
    train.add_argument(
        "--parallelism", type=int, help="override the configured worker count"
    )
    train.add_argument("--seed", type=int, help="override the configured seed")

    evaluate = add_stage("evaluate", "compute test-split dice for trained runs")
    evaluate.add_argument(
        "--runs",
        help="comma-separated run-slug patterns (fnmatch) to restrict evaluation",
    )
    evaluate.add_argument(
        "--force", action="store_true", help="re-evaluate even if current"
    )

    compare = add_stage("compare", "paired significance test between two runs")
    compare.add_argument("--baseline", required=True, help="baseline run slug")
    compare.add_argument("--candidate", required=True, help="candidate run slug")
    compare.add_argument(
        "--levels",
        help="comma-separated prompt levels to restrict the pairing (default: all)",
    )

    report = add_stage("report", "assemble the full results report")
    report.add_argument(
        "--force", action="store_true", help="re-render even if current"
    )

    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.from_yaml(args.config)
    overrides = {}
    if getattr(args, "parallelism", None) is not None:
        if args.parallelism < 1:
            raise ConfigError(f"--parallelism must be >= 1, got {args.parallelism}")
        overrides["parallelism"] = args.parallelism
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def _dispatch(args: argparse.Namespace) -> dict:
    config = _load_config(args)
    if args.command == "validate":
        return cmd_validate(config)
    if args.command == "ingest":
        return cmd_ingest(config, force=args.force)
    if args.command == "prompts":
        return cmd_prompts(config, force=args.force)
    if args.command == "train":
        return cmd_train(config, runs=args.runs, force=args.force)
    if args.command == "evaluate":
        return cmd_evaluate(config, runs=args.runs, force=args.force)
    if args.command == "compare":
        levels = None
        if args.levels:
            try:
                levels = [int(part) for part in args.levels.split(",") if part.strip()]
            except ValueError:
                raise ConfigError(
                    f"--levels must be comma-separated integers, got {args.levels!r}"
                ) from None
        return cmd_compare(
            config, baseline=args.baseline, candidate=args.candidate, levels=levels
        )
    if args.command == "report":
        return cmd_report(config, force=args.force)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        outcome = _dispatch(args)
    except IncompleteMatrixError as exc:
        log.error("incomplete matrix: %s", exc)
        return EXIT_INCOMPLETE
    except (ConfigError, DataError, PromptError, VqaError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (StaleArtifactError, ModelError, TrainingError, EvaluationError) as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except Exception:  # pragma: no cover - defensive: unexpected failure
        log.exception("unexpected failure")
        return EXIT_RUNTIME
    print(json.dumps(outcome, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
