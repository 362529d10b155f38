"""The epoch loop: AdamW, plateau LR schedule, best-val-dice checkpointing.

Determinism contract: given a fixed seed and single-worker loading, two runs
produce identical histories.  Batch order is drawn from a seeded generator
keyed by (seed, epoch); the model is built from the same seed upstream.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import TrainingError
from ..evaluation.metrics import dice_at_512
from ..models.adapter import VlsmHandle
from ..prompts.triplets import TripletEntry
from .config import ExperimentConfig
from .data import TripletTensorDataset
from .losses import combined_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochStats:
    """One epoch's summary; epochs are 1-indexed."""

    epoch: int
    train_loss: float
    val_loss: float
    val_dice: float
    learning_rate: float


@dataclass
class TrainingHistory:
    epochs: list[EpochStats]
    best_epoch: int
    best_val_dice: float
    lr_drop_epochs: list[int]

    @classmethod
    def from_epochs(
        cls, epochs: list[EpochStats], lr_drop_epochs: list[int] | None = None
    ) -> "TrainingHistory":
        if not epochs:
            raise TrainingError("history requires at least one epoch")
        best_val_dice = max(stats.val_dice for stats in epochs)
        best_epoch = next(s.epoch for s in epochs if s.val_dice == best_val_dice)
        return cls(
            epochs=list(epochs),
            best_epoch=best_epoch,
            best_val_dice=best_val_dice,
            lr_drop_epochs=list(lr_drop_epochs or []),
        )

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "val_dice", "learning_rate"])
            for stats in self.epochs:
                writer.writerow([
                    stats.epoch,
                    f"{stats.train_loss:.8f}",
                    f"{stats.val_loss:.8f}",
                    f"{stats.val_dice:.8f}",
                    f"{stats.learning_rate:.10g}",
                ])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainingHistory":
        epochs = []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                epochs.append(EpochStats(
                    epoch=int(row["epoch"]),
                    train_loss=float(row["train_loss"]),
                    val_loss=float(row["val_loss"]),
                    val_dice=float(row["val_dice"]),
                    learning_rate=float(row["learning_rate"]),
                ))
        drops = [
            later.epoch - 1
            for earlier, later in zip(epochs, epochs[1:])
            if later.learning_rate < earlier.learning_rate
        ]
        return cls.from_epochs(epochs, drops)


@dataclass(frozen=True)
class PlateauEvent:
    dropped: bool
    should_stop: bool


class PlateauTracker:
    """Divide the LR by ``factor`` after ``patience`` consecutive epochs with
    no strict improvement of the validation loss; request a stop after
    ``early_stop_bad_epochs`` consecutive bad epochs following the second drop.
    """

    def __init__(
        self, patience: int = 5, factor: float = 10.0, early_stop_bad_epochs: int = 10
    ):
        self.patience = patience
        self.factor = factor
        self.early_stop_bad_epochs = early_stop_bad_epochs
        self.best = math.inf
        self.counter = 0
        self.drop_count = 0
        self.bad_after_second_drop = 0

    def update(self, val_loss: float) -> PlateauEvent:
        if val_loss < self.best:
            self.best = val_loss
            self.counter = 0
            self.bad_after_second_drop = 0
            return PlateauEvent(dropped=False, should_stop=False)
        self.counter += 1
        if self.drop_count >= 2:
            self.bad_after_second_drop += 1
        dropped = False
        if self.counter >= self.patience:
            self.counter = 0
            self.drop_count += 1
            dropped = True
        should_stop = (
            self.drop_count >= 2
            and self.bad_after_second_drop >= self.early_stop_bad_epochs
        )
        return PlateauEvent(dropped=dropped, should_stop=should_stop)


@dataclass
class TrainResult:
    checkpoint_path: Path
    history: TrainingHistory
    touched_samples: set[tuple[str, str]]


def train(
    config: ExperimentConfig,
    handle: VlsmHandle,
    train_entries: list[TripletEntry],
    val_entries: list[TripletEntry],
    run_dir: str | Path,
    *,
    val_loss_schedule: list[float] | None = None,
) -> TrainResult:
    """Optimize ``handle`` on the triplets, returning the best checkpoint.

    ``val_loss_schedule``, when given, overrides the computed validation loss
    fed to the plateau tracker (a test hook for schedule oracles); validation
    dice and checkpoint selection stay real.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    train_data = TripletTensorDataset(train_entries, handle.spec)
    val_data = TripletTensorDataset(val_entries, handle.spec)

    torch.manual_seed(config.seed)
    handle.set_encoder_trainable(config.encoder_trainable)
    optimizer = torch.optim.AdamW(
        handle.trainable_parameters(),
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    tracker = PlateauTracker(
        patience=config.plateau_patience,
        factor=config.plateau_factor,
        early_stop_bad_epochs=config.early_stop_bad_epochs,
    )
    autocast = _autocast_context(config)

    checkpoint_path = run_dir / "best.pt"
    epochs: list[EpochStats] = []
    lr_drop_epochs: list[int] = []
    best_val_dice = -math.inf

    for epoch in range(1, config.max_epochs + 1):
        current_lr = optimizer.param_groups[0]["lr"]
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_data))
        handle.module.train()
        train_losses = []
        for batch_index, (_, (images, targets, prompts)) in enumerate(
            train_data.iter_batches(config.batch_size, order)
        ):
            optimizer.zero_grad()
            with autocast():
                probs = handle.forward(images, prompts)
                loss = combined_loss(
                    probs, targets,
                    dice_weight=config.dice_weight, bce_weight=config.bce_weight,
                )
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}: {loss.item()}"
                )
            loss.backward()
            optimizer.step()
            train_losses.append(float(loss.detach()))

        val_loss, val_dice = _validate(handle, val_data, config)
        scheduled_loss = (
            val_loss_schedule[epoch - 1]
            if val_loss_schedule is not None and epoch - 1 < len(val_loss_schedule)
            else val_loss
        )
        epochs.append(EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(train_losses)),
            val_loss=scheduled_loss,
            val_dice=val_dice,
            learning_rate=current_lr,
        ))

        if val_dice > best_val_dice:
            best_val_dice = val_dice
            handle.save_checkpoint(
                checkpoint_path,
                config=config.to_json_dict(),
                epoch=epoch,
                val_dice=val_dice,
                strategy=config.strategy.value,
            )

        event = tracker.update(scheduled_loss)
        if event.dropped:
            for group in optimizer.param_groups:
                group["lr"] /= config.plateau_factor
            lr_drop_epochs.append(epoch)
            log.info("epoch %d: LR dropped to %.3g", epoch, optimizer.param_groups[0]["lr"])
        if event.should_stop:
            log.info("epoch %d: early stop (two full plateau cycles exhausted)", epoch)
            break

    history = TrainingHistory.from_epochs(epochs, lr_drop_epochs)
    history.to_csv(run_dir / "history.csv")
    touched = train_data.touched_keys() | val_data.touched_keys()
    return TrainResult(
        checkpoint_path=checkpoint_path, history=history, touched_samples=touched
    )


def _validate(
    handle: VlsmHandle, val_data: TripletTensorDataset, config: ExperimentConfig
) -> tuple[float, float]:
    handle.module.eval()
    losses, dices = [], []
    with torch.no_grad():
        for start in range(0, len(val_data), config.batch_size):
            indices = list(range(start, min(start + config.batch_size, len(val_data))))
            images, targets, prompts = val_data.batch(indices)
            probs = handle.forward(images, prompts)
            loss = combined_loss(
                probs, targets,
                dice_weight=config.dice_weight, bce_weight=config.bce_weight,
            )
            losses.append(float(loss) * len(indices))
            for offset, index in enumerate(indices):
                dices.append(dice_at_512(
                    probs[offset, 0].numpy(), val_data.load_gt_mask(index)
                ))
    return sum(losses) / len(val_data), float(np.mean(dices))


def _autocast_context(config: ExperimentConfig):
    if config.precision == "float16-mixed":
        if torch.cuda.is_available():
            return lambda: torch.autocast("cuda", dtype=torch.float16)
        log.warning("float16-mixed requested without an accelerator; using float32")
    import contextlib

    return contextlib.nullcontext
