"""Pipeline configuration: one YAML file describing the whole experiment.

Environment variables override the dataset roots only: ECHO_VLSM_CAMUS_ROOT
and ECHO_VLSM_SDM_ROOT.  The config hash covers the effective configuration
(after overrides), so artifacts produced under different roots or matrices
are detected as stale.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..io_utils import canonical_hash
from ..models.spec import ModelKind, ModelSpec, STUB_DEFAULT_INPUT_SIZE
from ..records import Source, make_targets, DEFAULT_TARGETS
from ..training.config import Strategy
from ..vqa.client import VqaClientSpec

CAMUS_ROOT_ENV = "ECHO_VLSM_CAMUS_ROOT"
SDM_ROOT_ENV = "ECHO_VLSM_SDM_ROOT"

_KNOWN_TOP_KEYS = {
    "camus_root", "sdm_root", "output_dir", "seed", "precision", "parallelism",
    "test_patients_file", "val_patient_count", "label_values", "vqa", "matrix",
    "training", "stub_input_size", "model_weights",
}


def _parse_freeze_flag(value) -> bool:
    """Freeze flags may be booleans (encoder_trainable) or frozen/unfrozen."""
    if isinstance(value, bool):
        return value
    mapping = {"frozen": False, "unfrozen": True}
    try:
        return mapping[str(value).strip().lower()]
    except KeyError:
        raise ConfigError(
            f"freeze flag must be true/false or frozen/unfrozen, got {value!r}"
        ) from None


@dataclass
class ExperimentMatrix:
    model_kinds: list[ModelKind]
    strategies: list[Strategy]
    levels: list[int]
    freeze_flags: list[bool]  # encoder_trainable values

    def __post_init__(self):
        if not (self.model_kinds and self.strategies and self.levels and self.freeze_flags):
            raise ConfigError("experiment matrix must be nonempty on every axis")
        for level in self.levels:
            if not 0 <= level <= 7:
                raise ConfigError(f"prompt level {level} out of range [0, 7]")
        for axis_name in ("model_kinds", "strategies", "levels", "freeze_flags"):
            axis = getattr(self, axis_name)
            if len(set(axis)) != len(axis):
                raise ConfigError(f"duplicate entries in matrix axis {axis_name}")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentMatrix":
        unknown = set(obj) - {"model_kinds", "strategies", "levels", "freeze_flags"}
        if unknown:
            raise ConfigError(f"unknown matrix keys: {sorted(unknown)}")
        try:
            kinds = [ModelKind(k) for k in obj["model_kinds"]]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad matrix model_kinds: {exc}") from exc
        try:
            strategies = [Strategy.from_string(s) for s in obj["strategies"]]
        except KeyError as exc:
            raise ConfigError(f"matrix missing {exc}") from exc
        levels = [int(level) for level in obj.get("levels", [])]
        flags = [_parse_freeze_flag(f) for f in obj.get("freeze_flags", [])]
        return cls(kinds, strategies, levels, flags)

    def to_json_dict(self) -> dict:
        return {
            "model_kinds": [k.value for k in self.model_kinds],
            "strategies": [s.value for s in self.strategies],
            "levels": list(self.levels),
            "freeze_flags": list(self.freeze_flags),
        }


@dataclass
class PipelineConfig:
    camus_root: Path
    sdm_root: Path | None
    output_dir: Path
    matrix: ExperimentMatrix
    vqa: VqaClientSpec
    seed: int = 0
    precision: str = "float32"
    parallelism: int = 1
    test_patients_file: Path | None = None
    val_patient_count: int = 50
    label_values: dict = field(default_factory=dict)
    training_overrides: dict = field(default_factory=dict)
    stub_input_size: int = STUB_DEFAULT_INPUT_SIZE
    model_weights: dict = field(default_factory=dict)
    vqa_max_in_flight: int = 4

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.precision not in ("float32", "float16-mixed"):
            raise ConfigError(f"unknown precision {self.precision!r}")
        if self.val_patient_count < 0:
            raise ConfigError(
                f"val patient count must be >= 0, got {self.val_patient_count}"
            )
        needs_synthetic = any(
            s in (Strategy.SYNTHETIC, Strategy.SYNTH_PT_REAL_FT)
            for s in self.matrix.strategies
        )
        if needs_synthetic and self.sdm_root is None:
            raise ConfigError(
                "the experiment matrix trains on synthetic data but sdm_root is unset"
            )
        allowed_training_keys = {
            "batch_size", "learning_rate", "weight_decay", "plateau_patience",
            "plateau_factor", "dice_weight", "bce_weight", "max_epochs",
            "early_stop_bad_epochs", "precision",
        }
        bad_training_keys = set(self.training_overrides) - allowed_training_keys
        if bad_training_keys:
            hint = ""
            if "seed" in bad_training_keys:
                hint = "; set the top-level 'seed' key instead"
            raise ConfigError(
                f"unknown training override keys: {sorted(bad_training_keys)}{hint}"
            )

    @classmethod
    def from_yaml(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping, got {type(raw).__name__}")
        unknown = set(raw) - _KNOWN_TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        base_dir = Path(base_dir)

        def resolve(value: str | None) -> Path | None:
            if value is None:
                return None
            candidate = Path(os.path.expanduser(str(value)))
            return candidate if candidate.is_absolute() else base_dir / candidate

        camus_root = os.environ.get(CAMUS_ROOT_ENV) or raw.get("camus_root")
        if camus_root is None:
            raise ConfigError(
                f"camus_root is required (config key or {CAMUS_ROOT_ENV})"
            )
        camus_root = Path(os.path.expanduser(str(camus_root)))
        if not camus_root.is_absolute():
            camus_root = base_dir / camus_root

        sdm_root = os.environ.get(SDM_ROOT_ENV) or raw.get("sdm_root")
        sdm_root = resolve(sdm_root) if sdm_root is not None else None

        if "matrix" not in raw:
            raise ConfigError("config requires a 'matrix' section")
        matrix = ExperimentMatrix.from_dict(raw["matrix"])
        vqa = VqaClientSpec.from_dict({
            k: v for k, v in dict(raw.get("vqa") or {}).items() if k != "max_in_flight"
        })
        vqa_max_in_flight = int((raw.get("vqa") or {}).get("max_in_flight", 4))

        label_values = dict(raw.get("label_values") or {})
        if label_values:
            make_targets(label_values)  # validate eagerly

        return cls(
            camus_root=camus_root,
            sdm_root=sdm_root,
            output_dir=resolve(raw.get("output_dir", "out")),
            matrix=matrix,
            vqa=vqa,
            seed=int(raw.get("seed", 0)),
            precision=str(raw.get("precision", "float32")),
            parallelism=int(raw.get("parallelism", 1)),
            test_patients_file=resolve(raw.get("test_patients_file")),
            val_patient_count=int(raw.get("val_patient_count", 50)),
            label_values=label_values,
            training_overrides=dict(raw.get("training") or {}),
            stub_input_size=int(raw.get("stub_input_size", STUB_DEFAULT_INPUT_SIZE)),
            model_weights=dict(raw.get("model_weights") or {}),
            vqa_max_in_flight=vqa_max_in_flight,
        )

    def with_overrides(self, **changes) -> "PipelineConfig":
        """Copy with some fields replaced (CLI flags beat config values)."""
        return dataclasses.replace(self, **changes)

    # -- derived ----------------------------------------------------------
    def targets(self):
        if self.label_values:
            return make_targets(self.label_values)
        return DEFAULT_TARGETS

    def model_spec(self, kind: ModelKind) -> ModelSpec:
        weights_ref = self.model_weights.get(kind.value)
        if kind is ModelKind.STUB:
            return ModelSpec.for_kind(kind, input_size=self.stub_input_size)
        return ModelSpec.for_kind(kind, weights_ref=weights_ref)

    def to_json_dict(self) -> dict:
        return {
            "camus_root": str(self.camus_root),
            "sdm_root": str(self.sdm_root) if self.sdm_root else None,
            "output_dir": str(self.output_dir),
            "matrix": self.matrix.to_json_dict(),
            "vqa": {
                "kind": self.vqa.kind,
                "endpoint": self.vqa.endpoint,
                "command": self.vqa.command,
                "timeout": self.vqa.timeout,
                "retries": self.vqa.retries,
                "stub_answers": self.vqa.stub_answers,
                "stub_default": self.vqa.stub_default,
                "max_in_flight": self.vqa_max_in_flight,
            },
            "seed": self.seed,
            "precision": self.precision,
            "test_patients_file": (
                str(self.test_patients_file) if self.test_patients_file else None
            ),
            "val_patient_count": self.val_patient_count,
            "label_values": self.label_values,
            "training": self.training_overrides,
            "stub_input_size": self.stub_input_size,
            "model_weights": self.model_weights,
        }

    @property
    def config_hash(self) -> str:
        """Hash of the effective configuration, parallelism excluded.

        Parallelism changes scheduling, never results, so it must not
        invalidate artifacts.
        """
        return canonical_hash(self.to_json_dict())

    # The sources each strategy's phases consume, used to size prompt work.
    def needed_sources(self) -> set[Source]:
        sources = {Source.REAL}
        if any(
            s in (Strategy.SYNTHETIC, Strategy.SYNTH_PT_REAL_FT)
            for s in self.matrix.strategies
        ):
            sources.add(Source.SYNTHETIC)
        return sources
