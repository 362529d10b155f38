"""Shape answer normalization, caching, and concurrent resolution."""

from __future__ import annotations

import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..datasets.readers import load_image
from ..errors import ShapeAnswerError
from ..records import SampleRecord, SegmentationTarget, Shape
from .boxes import draw_green_box
from .client import SHAPE_QUESTION_TEMPLATE, query_shape, shape_question

log = logging.getLogger(__name__)

__all__ = [
    "SHAPE_QUESTION_TEMPLATE",
    "shape_question",
    "normalize_shape_answer",
    "ShapeCache",
    "resolve_shapes",
]

_ARTICLES = {"a", "an", "the"}
_SHAPE_WORDS = {shape.value: shape for shape in Shape}


def normalize_shape_answer(raw: str) -> Shape:
    """Map a free-text answer onto one of the five allowed shape values.

    Case-insensitive; articles and punctuation are ignored.  Exactly one
    distinct shape word must occur, otherwise the raw answer is unusable.
    """
    tokens = [t for t in re.split(r"[^a-z]+", raw.lower()) if t and t not in _ARTICLES]
    found = {_SHAPE_WORDS[t] for t in tokens if t in _SHAPE_WORDS}
    if not found:
        raise ShapeAnswerError(raw, "no allowed shape word found")
    if len(found) > 1:
        names = sorted(shape.value for shape in found)
        raise ShapeAnswerError(raw, f"ambiguous between {names}")
    return found.pop()


class ShapeCache:
    """Append-only JSONL cache of VQA answers keyed by (sample_key, structure).

    Entries record the raw answer and its normalized shape (null when the
    answer was unusable, so failed answers are not re-queried).  Safe for
    concurrent read/insert; identical keys resolve last-write-wins.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], tuple[str, Shape | None]] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        import json

        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "_meta" in obj and len(obj) == 1:
                    continue
                normalized = obj["normalized"]
                self._entries[(obj["sample_key"], obj["structure"])] = (
                    obj["raw_answer"],
                    Shape(normalized) if normalized is not None else None,
                )

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: tuple[str, str]) -> bool:
        with self._lock:
            return key in self._entries

    def get(self, key: tuple[str, str]) -> tuple[str, Shape | None] | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: tuple[str, str], raw_answer: str, normalized: Shape | None) -> None:
        import json

        sample_key, structure = key
        line = json.dumps(
            {
                "sample_key": sample_key,
                "structure": structure,
                "raw_answer": raw_answer,
                "normalized": normalized.value if normalized is not None else None,
            },
            sort_keys=True,
        )
        with self._lock:
            self._entries[key] = (raw_answer, normalized)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def shapes(self) -> dict[tuple[str, str], Shape]:
        """All usable normalized answers."""
        with self._lock:
            return {
                key: shape
                for key, (_, shape) in self._entries.items()
                if shape is not None
            }


def resolve_shapes(
    records: list[SampleRecord],
    targets: tuple[SegmentationTarget, ...],
    binary_mask_refs: dict[tuple[str, str], str],
    client,
    cache: ShapeCache,
    *,
    max_in_flight: int = 4,
    retries: int = 2,
) -> dict[tuple[str, str], Shape]:
    """Fill the cache for every (record, target) pair and return usable shapes.

    Pairs already cached (usable or not) issue no VQA call, so a rerun over
    the same records is free.  Queries run concurrently up to
    ``max_in_flight``; the cache is the only shared state.
    """
    pending: list[tuple[SampleRecord, SegmentationTarget]] = []
    for record in records:
        for target in targets:
            if (record.sample_key, target.name) not in cache:
                pending.append((record, target))

    def worker(item: tuple[SampleRecord, SegmentationTarget]) -> None:
        record, target = item
        key = (record.sample_key, target.name)
        mask = np.load(binary_mask_refs[key])
        if not mask.any():
            log.warning(
                "sample %s: empty %s mask, no shape query possible",
                record.sample_key,
                target.name,
            )
            cache.put(key, "", None)
            return
        boxed = draw_green_box(load_image(record.image_ref), mask)
        raw = query_shape(
            client, boxed, target.name, sample_key=record.sample_key, retries=retries
        )
        try:
            normalized = normalize_shape_answer(raw)
        except ShapeAnswerError as exc:
            log.warning("sample %s, structure %s: %s", record.sample_key, target.name, exc)
            normalized = None
        cache.put(key, raw, normalized)

    if pending:
        with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
            for future in [pool.submit(worker, item) for item in pending]:
                future.result()

    wanted = {
        (record.sample_key, target.name) for record in records for target in targets
    }
    return {key: shape for key, shape in cache.shapes().items() if key in wanted}
