"""Attribute extraction and merging for the incremental prompt levels.

Each prompt level introduces one attribute.  The introduction order differs
between the real and synthetic datasets: synthetic images carry no annotated
image quality, so their schedule skips that attribute and tops out one level
earlier.

    real:       P1 structure, P2 view, P3 cycle, P4 sex, P5 age,
                P6 image quality, P7 shape
    synthetic:  P1 structure, P2 view, P3 cycle, P4 sex, P5 age, P6 shape
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from ..errors import PromptError
from ..records import (
    STRUCTURE_NAMES,
    ImageQuality,
    Phase,
    SegmentationTarget,
    Sex,
    Shape,
    Source,
    View,
)

ATTRIBUTE_KEYS = ("structure", "view", "phase", "sex", "age", "image_quality", "shape")

REAL_SCHEDULE = ("structure", "view", "phase", "sex", "age", "image_quality", "shape")
SYNTH_SCHEDULE = ("structure", "view", "phase", "sex", "age", "shape")

_FILENAME_RE = re.compile(
    r"^(?P<patient>patient\d+)_(?P<view>2CH|4CH)_(?P<phase>ED|ES)(?:[._-].*)?$",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class AttributeSet:
    """The attributes available for one (sample, structure) pair.

    ``structure``, ``view``, and ``phase`` are always derivable (from the
    segmentation target and the filename); the remainder may be absent when
    their source is missing — rendering validates availability per level.
    """

    structure: str
    view: View
    phase: Phase
    sex: Sex | None = None
    age: int | None = None
    image_quality: ImageQuality | None = None
    shape: Shape | None = None

    def __post_init__(self):
        if self.structure not in STRUCTURE_NAMES:
            raise PromptError(
                f"unknown structure {self.structure!r}; expected one of {STRUCTURE_NAMES}"
            )
        if self.age is not None and self.age <= 0:
            raise PromptError(f"age must be positive, got {self.age}")

    def get(self, key: str):
        if key not in ATTRIBUTE_KEYS:
            raise PromptError(f"unknown attribute key {key!r}")
        return getattr(self, key)


def schedule_for(source: Source) -> tuple[str, ...]:
    return REAL_SCHEDULE if source is Source.REAL else SYNTH_SCHEDULE


def max_level(source: Source) -> int:
    return len(schedule_for(source))


def validate_level(level: int, source: Source) -> int:
    if not isinstance(level, int) or isinstance(level, bool):
        raise PromptError(f"prompt level must be an integer, got {level!r}")
    top = max_level(source)
    if not 0 <= level <= top:
        raise PromptError(
            f"prompt level {level} out of range [0, {top}] for {source.value} data"
        )
    return level


def required_attributes(level: int, source: Source) -> tuple[str, ...]:
    """The attribute keys consumed at ``level`` (strictly monotone in level)."""
    validate_level(level, source)
    return schedule_for(source)[:level]


def attributes_from_filename(name: str) -> dict:
    """Parse view and phase from a CAMUS-convention filename or stem."""
    stem = Path(name).name
    match = _FILENAME_RE.match(stem)
    if match is None:
        raise PromptError(
            f"filename {name!r} does not follow the patientNNNN_<view>_<phase> convention"
        )
    return {
        "view": View.from_token(match.group("view")),
        "phase": Phase.from_token(match.group("phase")),
    }


def _merge_parts(parts: list[dict]) -> dict:
    merged: dict = {}
    for part in parts:
        for key, value in part.items():
            if value is None:
                continue
            if key not in ATTRIBUTE_KEYS:
                raise PromptError(f"unknown attribute key {key!r} in part {part!r}")
            if key in merged and merged[key] != value:
                raise PromptError(
                    f"conflicting values for attribute {key!r}: "
                    f"{merged[key]!r} vs {value!r}"
                )
            merged.setdefault(key, value)
    return merged


def merge_attributes(
    filename_part: dict,
    metadata_part: dict,
    shape_part: dict,
    target: SegmentationTarget,
    *,
    source: Source = Source.REAL,
    level: int | None = None,
) -> AttributeSet:
    """Union the per-source attribute fragments into one AttributeSet.

    Conflicting duplicate fields raise; if ``level`` is given, every attribute
    the level consumes must be present, with the error naming both.
    """
    merged = _merge_parts([filename_part, metadata_part, shape_part])
    if "structure" in merged and merged["structure"] != target.name:
        raise PromptError(
            f"conflicting values for attribute 'structure': "
            f"{merged['structure']!r} vs {target.name!r}"
        )
    merged["structure"] = target.name
    if source is Source.SYNTHETIC and merged.get("image_quality") is not None:
        raise PromptError(
            "synthetic samples carry no annotated image quality, "
            f"but got {merged['image_quality']!r}"
        )
    attrs = AttributeSet(**merged)
    if level is not None:
        for key in required_attributes(level, source):
            if attrs.get(key) is None:
                raise PromptError(
                    f"attribute {key!r} required at prompt level {level} is missing"
                )
    return attrs
