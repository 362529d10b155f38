"""Model family specifications: kind, input size, normalization constants."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..errors import ConfigError

# Input resolutions are fixed per family; the stub's is configurable.
FAMILY_INPUT_SIZES = {"clipseg-like": 416, "cris-like": 352}
STUB_DEFAULT_INPUT_SIZE = 64

# The stub is its own model family; its published constants live here.  Real
# families ship their normalization with their weights/config and the adapter
# reads it from there at load time (see adapter.build_handle).
STUB_NORMALIZATION = ((0.5, 0.5, 0.5), (0.5, 0.5, 0.5))


class ModelKind(str, Enum):
    CLIPSEG_LIKE = "clipseg-like"
    CRIS_LIKE = "cris-like"
    STUB = "stub"


@dataclass(frozen=True)
class ModelSpec:
    """What to build: architecture family, input size, normalization, weights."""

    kind: ModelKind
    input_size: int
    normalization: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None
    weights_ref: str | None = None

    def __post_init__(self):
        if self.input_size <= 0:
            raise ConfigError(f"input size must be positive, got {self.input_size}")
        expected = FAMILY_INPUT_SIZES.get(self.kind.value)
        if expected is not None and self.input_size != expected:
            raise ConfigError(
                f"{self.kind.value} models take {expected}x{expected} input, "
                f"got {self.input_size}"
            )
        if self.normalization is not None:
            mean, std = self.normalization
            if len(mean) != 3 or len(std) != 3:
                raise ConfigError("normalization mean/std must have three channels")
            if any(s <= 0 for s in std):
                raise ConfigError(f"normalization std must be positive, got {std}")

    @classmethod
    def for_kind(
        cls,
        kind: ModelKind | str,
        *,
        input_size: int | None = None,
        weights_ref: str | None = None,
        normalization=None,
    ) -> "ModelSpec":
        kind = ModelKind(kind)
        if input_size is None:
            input_size = FAMILY_INPUT_SIZES.get(kind.value, STUB_DEFAULT_INPUT_SIZE)
        if normalization is None and kind is ModelKind.STUB:
            normalization = STUB_NORMALIZATION
        return cls(
            kind=kind,
            input_size=input_size,
            normalization=normalization,
            weights_ref=weights_ref,
        )
