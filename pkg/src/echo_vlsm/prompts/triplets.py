"""Triplet materialization: (image, binary mask, prompt) entries per level.

Binary masks are written once per (sample, structure) and shared by every
prompt level; the manifest stores prompts verbatim so entries re-validate
against :func:`render_prompt`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..datasets.masks import binarize_mask
from ..datasets.readers import load_mask
from ..errors import PromptError
from ..io_utils import read_jsonl, write_jsonl
from ..records import (
    PatientMetadata,
    SampleRecord,
    SegmentationTarget,
    Shape,
    Source,
)
from .attributes import AttributeSet, required_attributes, validate_level
from .render import render_prompt

log = logging.getLogger(__name__)


def structure_slug(name: str) -> str:
    return name.replace(" ", "-")


@dataclass(frozen=True)
class TripletEntry:
    """One manifest line: an image, a binary mask, and a rendered prompt."""

    image_ref: str
    mask_ref: str
    prompt: str
    level: int
    structure: str
    sample_key: str
    patient_id: str
    split: str
    source: Source

    def to_json_dict(self) -> dict:
        return {
            "image_ref": self.image_ref,
            "mask_ref": self.mask_ref,
            "prompt": self.prompt,
            "level": self.level,
            "structure": self.structure,
            "sample_key": self.sample_key,
            "patient_id": self.patient_id,
            "split": self.split,
            "source": self.source.value,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TripletEntry":
        return cls(
            image_ref=obj["image_ref"],
            mask_ref=obj["mask_ref"],
            prompt=obj["prompt"],
            level=int(obj["level"]),
            structure=obj["structure"],
            sample_key=obj["sample_key"],
            patient_id=obj["patient_id"],
            split=obj["split"],
            source=Source(obj["source"]),
        )


def materialize_binary_masks(
    records: list[SampleRecord],
    targets: tuple[SegmentationTarget, ...],
    masks_dir: str | Path,
    *,
    force: bool = False,
) -> dict[tuple[str, str], str]:
    """Write one binary .npy mask per (record, target); reuse existing files.

    Returns a mapping (sample_key, structure name) -> mask path.
    """
    masks_dir = Path(masks_dir)
    masks_dir.mkdir(parents=True, exist_ok=True)
    refs: dict[tuple[str, str], str] = {}
    for record in records:
        multiclass = None
        for target in targets:
            out = masks_dir / f"{record.sample_key}__{structure_slug(target.name)}.npy"
            if force or not out.exists():
                if multiclass is None:
                    multiclass = load_mask(record.mask_ref)
                np.save(out, binarize_mask(multiclass, target))
            refs[(record.sample_key, target.name)] = str(out)
    return refs


def emit_triplets(
    records: list[SampleRecord],
    targets: tuple[SegmentationTarget, ...],
    levels: list[int],
    *,
    source: Source,
    split: str,
    metadata: dict[str, PatientMetadata],
    shapes: dict[tuple[str, str], Shape],
    binary_mask_refs: dict[tuple[str, str], str],
) -> list[TripletEntry]:
    """Render every (record, target, level) entry in deterministic order.

    Shape is the only attribute allowed to be missing at a level that needs
    it: those entries are excluded with a log line (the VQA answer was
    unusable), while any other missing attribute is a hard error.
    """
    levels = sorted({validate_level(level, source) for level in levels})
    entries: list[TripletEntry] = []
    excluded = 0
    for record in records:
        if record.source is not source:
            raise PromptError(
                f"record {record.sample_key} has source {record.source.value}, "
                f"expected {source.value}"
            )
        patient_meta = metadata.get(record.patient_id)
        for target in targets:
            try:
                mask_ref = binary_mask_refs[(record.sample_key, target.name)]
            except KeyError:
                raise PromptError(
                    f"no binary mask materialized for sample {record.sample_key}, "
                    f"structure {target.name!r}"
                ) from None
            attrs = _resolve_attributes(record, target, patient_meta, shapes, source)
            for level in levels:
                needed = required_attributes(level, source)
                if "shape" in needed and attrs.shape is None:
                    log.info(
                        "excluding level-%d prompt for sample %s, structure %s: "
                        "no usable shape answer",
                        level,
                        record.sample_key,
                        target.name,
                    )
                    excluded += 1
                    continue
                missing = [key for key in needed if attrs.get(key) is None]
                if missing:
                    raise PromptError(
                        f"sample {record.sample_key}, structure {target.name!r}: "
                        f"attribute {missing[0]!r} required at prompt level {level} "
                        f"is missing"
                    )
                entries.append(
                    TripletEntry(
                        image_ref=record.image_ref,
                        mask_ref=mask_ref,
                        prompt=render_prompt(attrs, level, source),
                        level=level,
                        structure=target.name,
                        sample_key=record.sample_key,
                        patient_id=record.patient_id,
                        split=split,
                        source=source,
                    )
                )
    if excluded:
        log.warning(
            "excluded %d shape-level prompt entries (unusable VQA answers)", excluded
        )
    return entries


def _resolve_attributes(
    record: SampleRecord,
    target: SegmentationTarget,
    patient_meta: PatientMetadata | None,
    shapes: dict[tuple[str, str], Shape],
    source: Source,
) -> AttributeSet:
    sex = age = quality = None
    if patient_meta is not None:
        sex = patient_meta.sex
        age = patient_meta.age
        if source is Source.REAL:
            quality = patient_meta.image_quality.get(record.view.value)
    return AttributeSet(
        structure=target.name,
        view=record.view,
        phase=record.phase,
        sex=sex,
        age=age,
        image_quality=quality,
        shape=shapes.get((record.sample_key, target.name)),
    )


def write_triplets(
    entries: list[TripletEntry], path: str | Path, meta: dict | None = None
) -> None:
    write_jsonl(path, (entry.to_json_dict() for entry in entries), meta=meta)


def read_triplets(path: str | Path) -> list[TripletEntry]:
    return [TripletEntry.from_json_dict(obj) for obj in read_jsonl(path)]
