"""Strategy chaining: run enumeration and execution with provenance.

synth-PT:real-FT runs start from the best checkpoint of their synthetic
pretraining run; enumeration adds any missing upstream runs implicitly and
orders dependencies first.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import torch

from ..errors import TrainingError
from ..io_utils import canonical_hash
from ..models.adapter import VlsmHandle, build_handle, load_checkpoint
from ..models.spec import ModelKind, ModelSpec
from ..prompts.triplets import TripletEntry
from ..records import Source
from .config import ExperimentConfig, Strategy, run_slug
from .loop import TrainingHistory, TrainResult, train

log = logging.getLogger(__name__)

# Source of the entries each strategy phase consumes.
EntriesFor = Callable[[Source, str, int], "list[TripletEntry]"]


@dataclass(frozen=True)
class RunPlan:
    """One scheduled training run and its upstream dependency, if any."""

    config: ExperimentConfig
    upstream_slug: str | None = None
    implicit: bool = False

    @property
    def slug(self) -> str:
        return run_slug(self.config)


def upstream_level(level: int) -> int:
    """Synthetic pretraining level for a real-FT level (synthetic tops out at 6)."""
    return min(level, 6)


def enumerate_runs(
    model_kinds: list[ModelKind],
    strategies: list[Strategy],
    levels: list[int],
    freeze_flags: list[bool],
    *,
    seed: int = 0,
    config_overrides: dict | None = None,
) -> list[RunPlan]:
    """Expand the experiment matrix into dependency-ordered run plans.

    Invalid combinations (synthetic at level 7) are skipped with a log line;
    missing synthetic upstreams of synth-PT:real-FT runs are added implicitly.
    """
    overrides = dict(config_overrides or {})
    plans: dict[str, RunPlan] = {}

    def make_config(kind: ModelKind, strategy: Strategy, level: int, trainable: bool):
        return ExperimentConfig.for_kind(
            kind, strategy, level, trainable, seed=seed, **overrides
        )

    def add(plan: RunPlan) -> None:
        existing = plans.get(plan.slug)
        if existing is None or (existing.implicit and not plan.implicit):
            plans[plan.slug] = plan

    strategy_order = [Strategy.SYNTHETIC, Strategy.REAL, Strategy.SYNTH_PT_REAL_FT]
    for kind in model_kinds:
        for strategy in sorted(strategies, key=strategy_order.index):
            for level in sorted(levels):
                for trainable in sorted(freeze_flags):
                    if strategy is Strategy.SYNTHETIC and level > 6:
                        log.info(
                            "skipping invalid combination: synthetic strategy "
                            "has no level-%d prompts (%s)", level, kind.value,
                        )
                        continue
                    if strategy is Strategy.SYNTH_PT_REAL_FT:
                        pretrain = RunPlan(
                            config=make_config(
                                kind, Strategy.SYNTHETIC, upstream_level(level), trainable
                            ),
                            implicit=True,
                        )
                        add(pretrain)
                        add(RunPlan(
                            config=make_config(kind, strategy, level, trainable),
                            upstream_slug=pretrain.slug,
                        ))
                    else:
                        add(RunPlan(config=make_config(kind, strategy, level, trainable)))

    ordered = sorted(
        plans.values(),
        key=lambda plan: (
            plan.config.model_kind.value,
            strategy_order.index(plan.config.strategy),
            plan.config.prompt_level,
            plan.config.encoder_trainable,
        ),
    )
    return ordered


def state_dict_digest(state_dict: dict) -> str:
    """sha256 over parameter names and bytes, for weight-continuity checks."""
    digest = hashlib.sha256()
    for name in sorted(state_dict):
        tensor = state_dict[name]
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


@dataclass
class RunOutcome:
    slug: str
    status: str  # "trained" | "skipped"
    run_dir: Path
    checkpoint_path: Path
    history: TrainingHistory


def execute_run(
    plan: RunPlan,
    spec: ModelSpec,
    entries_for: EntriesFor,
    runs_dir: str | Path,
    *,
    force: bool = False,
    val_loss_schedule: list[float] | None = None,
) -> RunOutcome:
    """Train one plan idempotently; a completed identical run is skipped."""
    config = plan.config
    runs_dir = Path(runs_dir)
    run_dir = runs_dir / plan.slug
    provenance_path = run_dir / "provenance.json"
    checkpoint_path = run_dir / "best.pt"
    history_path = run_dir / "history.csv"
    expected_hash = canonical_hash(config.to_json_dict())

    if not force and provenance_path.exists():
        provenance = json.loads(provenance_path.read_text(encoding="utf-8"))
        if (
            provenance.get("config_hash") == expected_hash
            and checkpoint_path.exists()
            and history_path.exists()
        ):
            return RunOutcome(
                slug=plan.slug,
                status="skipped",
                run_dir=run_dir,
                checkpoint_path=checkpoint_path,
                history=TrainingHistory.from_csv(history_path),
            )

    handle, upstream_info = _initial_handle(plan, spec, runs_dir)
    source = config.strategy.trains_on
    train_entries = entries_for(source, "train", config.prompt_level)
    val_entries = entries_for(source, "val", config.prompt_level)
    if not train_entries or not val_entries:
        raise TrainingError(
            f"run {plan.slug}: empty {'train' if not train_entries else 'val'} "
            f"split for source {source.value} at level {config.prompt_level}"
        )

    initial_state_digest = state_dict_digest(handle.module.state_dict())
    result: TrainResult = train(
        config, handle, train_entries, val_entries, run_dir,
        val_loss_schedule=val_loss_schedule,
    )
    provenance = {
        "slug": plan.slug,
        "config": config.to_json_dict(),
        "config_hash": expected_hash,
        "upstream": upstream_info,
        "initial_state_digest": initial_state_digest,
        "best_epoch": result.history.best_epoch,
        "best_val_dice": result.history.best_val_dice,
        "epochs_trained": len(result.history.epochs),
        "lr_drop_epochs": result.history.lr_drop_epochs,
        "touched_samples": sorted(list(key) for key in result.touched_samples),
    }
    provenance_path.write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return RunOutcome(
        slug=plan.slug,
        status="trained",
        run_dir=run_dir,
        checkpoint_path=result.checkpoint_path,
        history=result.history,
    )


def _initial_handle(
    plan: RunPlan, spec: ModelSpec, runs_dir: Path
) -> tuple[VlsmHandle, dict | None]:
    if plan.config.strategy is not Strategy.SYNTH_PT_REAL_FT:
        return build_handle(spec, seed=plan.config.seed), None
    if plan.upstream_slug is None:
        raise TrainingError(f"run {plan.slug}: no upstream synthetic run recorded")
    upstream_checkpoint = runs_dir / plan.upstream_slug / "best.pt"
    if not upstream_checkpoint.exists():
        raise TrainingError(
            f"run {plan.slug}: missing upstream checkpoint {upstream_checkpoint}; "
            f"train the synthetic run first"
        )
    handle = load_checkpoint(spec, upstream_checkpoint)
    payload = torch.load(upstream_checkpoint, map_location="cpu", weights_only=False)
    upstream_info = {
        "slug": plan.upstream_slug,
        "checkpoint": str(upstream_checkpoint),
        "state_digest": state_dict_digest(payload["state_dict"]),
        "epoch": payload.get("epoch"),
        "val_dice": payload.get("val_dice"),
    }
    return handle, upstream_info
