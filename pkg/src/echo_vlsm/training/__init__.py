"""Training engine: losses, schedules, the epoch loop, and strategy chaining."""

from .config import (
    DEFAULT_BATCH_SIZES,
    DEFAULT_LEARNING_RATES,
    ExperimentConfig,
    Strategy,
    run_slug,
)
from .losses import bce_loss, combined_loss, soft_dice_loss
from .loop import EpochStats, PlateauTracker, TrainingHistory, TrainResult, train
from .strategies import RunPlan, enumerate_runs, execute_run

__all__ = [
    "DEFAULT_BATCH_SIZES",
    "DEFAULT_LEARNING_RATES",
    "ExperimentConfig",
    "Strategy",
    "run_slug",
    "bce_loss",
    "combined_loss",
    "soft_dice_loss",
    "EpochStats",
    "PlateauTracker",
    "TrainingHistory",
    "TrainResult",
    "train",
    "RunPlan",
    "enumerate_runs",
    "execute_run",
]
