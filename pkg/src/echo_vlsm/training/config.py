"""Experiment configuration: one training run fully described."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from enum import Enum

from ..errors import ConfigError
from ..models.spec import ModelKind
from ..records import Source


class Strategy(str, Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"
    SYNTH_PT_REAL_FT = "synth-PT:real-FT"

    @classmethod
    def from_string(cls, value: str) -> "Strategy":
        normalized = value.strip().lower().replace("_", "-")
        aliases = {
            "real": cls.REAL,
            "synthetic": cls.SYNTHETIC,
            "synth": cls.SYNTHETIC,
            "synth-pt:real-ft": cls.SYNTH_PT_REAL_FT,
            "synth-pt-real-ft": cls.SYNTH_PT_REAL_FT,
        }
        try:
            return aliases[normalized]
        except KeyError:
            raise ConfigError(
                f"unknown strategy {value!r}; expected one of "
                f"{sorted(set(a for a in aliases))}"
            ) from None

    @property
    def slug(self) -> str:
        return re.sub(r"[^a-zA-Z0-9]+", "-", self.value).strip("-").lower()

    @property
    def trains_on(self) -> Source:
        """The source whose train/val splits the (final) phase optimizes on."""
        return Source.SYNTHETIC if self is Strategy.SYNTHETIC else Source.REAL


DEFAULT_BATCH_SIZES = {
    ModelKind.CRIS_LIKE: 32,
    ModelKind.CLIPSEG_LIKE: 128,
    ModelKind.STUB: 8,
}

DEFAULT_LEARNING_RATES = {
    ModelKind.CRIS_LIKE: 2e-5,
    ModelKind.CLIPSEG_LIKE: 2e-3,
    ModelKind.STUB: 1e-2,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines one training run."""

    model_kind: ModelKind
    strategy: Strategy
    prompt_level: int
    encoder_trainable: bool
    batch_size: int
    learning_rate: float
    weight_decay: float = 1e-3
    plateau_patience: int = 5
    plateau_factor: float = 10.0
    dice_weight: float = 1.0
    bce_weight: float = 0.2
    seed: int = 0
    max_epochs: int = 100
    early_stop_bad_epochs: int = 10
    precision: str = "float32"

    def __post_init__(self):
        if self.dice_weight <= 0 or self.bce_weight < 0:
            raise ConfigError(
                f"loss weights must be positive (bce may be zero for ablations), "
                f"got dice={self.dice_weight}, bce={self.bce_weight}"
            )
        if self.plateau_patience < 1:
            raise ConfigError(f"plateau patience must be >= 1, got {self.plateau_patience}")
        if self.plateau_factor <= 1:
            raise ConfigError(f"plateau factor must be > 1, got {self.plateau_factor}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.max_epochs < 1:
            raise ConfigError(f"max epochs must be >= 1, got {self.max_epochs}")
        if self.early_stop_bad_epochs < 1:
            raise ConfigError(
                f"early-stop bad-epoch budget must be >= 1, got {self.early_stop_bad_epochs}"
            )
        if self.precision not in ("float32", "float16-mixed"):
            raise ConfigError(
                f"precision must be 'float32' or 'float16-mixed', got {self.precision!r}"
            )
        top = 7 if self.strategy.trains_on is Source.REAL else 6
        if not 0 <= self.prompt_level <= top:
            raise ConfigError(
                f"prompt level {self.prompt_level} out of range [0, {top}] for "
                f"strategy {self.strategy.value}"
            )

    @classmethod
    def for_kind(
        cls,
        model_kind: ModelKind | str,
        strategy: Strategy | str,
        prompt_level: int,
        encoder_trainable: bool,
        **overrides,
    ) -> "ExperimentConfig":
        model_kind = ModelKind(model_kind)
        if isinstance(strategy, str):
            strategy = Strategy.from_string(strategy)
        values = dict(
            model_kind=model_kind,
            strategy=strategy,
            prompt_level=prompt_level,
            encoder_trainable=encoder_trainable,
            batch_size=DEFAULT_BATCH_SIZES[model_kind],
            learning_rate=DEFAULT_LEARNING_RATES[model_kind],
        )
        values.update(overrides)
        return cls(**values)

    def to_json_dict(self) -> dict:
        obj = asdict(self)
        obj["model_kind"] = self.model_kind.value
        obj["strategy"] = self.strategy.value
        return obj

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        obj["model_kind"] = ModelKind(obj["model_kind"])
        obj["strategy"] = Strategy.from_string(obj["strategy"])
        return cls(**obj)


def run_slug(config: ExperimentConfig) -> str:
    """Filesystem-safe unique run identifier."""
    freeze = "unfrozen" if config.encoder_trainable else "frozen"
    return (
        f"{config.model_kind.value}__{config.strategy.slug}"
        f"__P{config.prompt_level}__{freeze}__seed{config.seed}"
    )
