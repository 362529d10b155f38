"""Test-set evaluation: one dice result per (test image, structure)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from ..datasets.readers import load_image, load_mask
from ..errors import EvaluationError
from ..io_utils import read_jsonl, write_jsonl
from ..models.adapter import VlsmHandle, load_checkpoint
from ..models.preprocess import preprocess
from ..models.spec import ModelSpec
from ..prompts.triplets import TripletEntry
from ..records import Source
from .metrics import dice_at_512


@dataclass(frozen=True)
class DiceResult:
    """One evaluated (sample, structure) pair at one prompt level."""

    sample_key: str
    structure: str
    level: int
    dice: float

    def __post_init__(self):
        if not 0.0 <= self.dice <= 1.0:
            raise EvaluationError(
                f"dice for {self.sample_key}/{self.structure} out of [0, 1]: {self.dice}"
            )

    def to_json_dict(self) -> dict:
        return {
            "sample_key": self.sample_key,
            "structure": self.structure,
            "level": self.level,
            "dice": self.dice,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DiceResult":
        return cls(
            sample_key=obj["sample_key"],
            structure=obj["structure"],
            level=int(obj["level"]),
            dice=float(obj["dice"]),
        )


def evaluate(
    spec: ModelSpec,
    checkpoint_path: str | Path,
    test_entries: list[TripletEntry],
    *,
    batch_size: int = 8,
) -> list[DiceResult]:
    """Evaluate a checkpoint on real test triplets; partial results forbidden.

    Deterministic: entries are processed in their given order and every entry
    yields exactly one result (any failure aborts the whole evaluation).
    """
    if not test_entries:
        raise EvaluationError("no test triplets to evaluate")
    for entry in test_entries:
        if entry.source is not Source.REAL or entry.split != "test":
            raise EvaluationError(
                f"evaluation accepts only real test-split triplets; entry "
                f"{entry.sample_key} has source={entry.source.value}, split={entry.split}"
            )
    handle: VlsmHandle = load_checkpoint(spec, checkpoint_path)
    handle.module.eval()
    results: list[DiceResult] = []
    with torch.no_grad():
        for start in range(0, len(test_entries), batch_size):
            batch = test_entries[start : start + batch_size]
            images = torch.stack([
                preprocess(load_image(entry.image_ref), handle.spec) for entry in batch
            ])
            probs = handle.forward(images, [entry.prompt for entry in batch])
            for offset, entry in enumerate(batch):
                results.append(DiceResult(
                    sample_key=entry.sample_key,
                    structure=entry.structure,
                    level=entry.level,
                    dice=dice_at_512(probs[offset, 0].numpy(), load_mask(entry.mask_ref)),
                ))
    if len(results) != len(test_entries):
        raise EvaluationError(
            f"evaluated {len(results)} of {len(test_entries)} triplets; "
            "partial reports are forbidden"
        )
    return results


def write_results(
    results: list[DiceResult], path: str | Path, *, run_slug: str, meta: dict | None = None
) -> None:
    meta = dict(meta or {})
    meta["run"] = run_slug
    write_jsonl(
        path,
        ({**result.to_json_dict(), "run": run_slug} for result in results),
        meta=meta,
    )


def read_results(path: str | Path) -> list[DiceResult]:
    return [DiceResult.from_json_dict(obj) for obj in read_jsonl(path)]
