"""Line-delimited JSON helpers used by every stage that persists records.

Files may start with a single ``{"_meta": {...}}`` line carrying the config
hash and code version that produced them; readers skip it transparently.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable

from .errors import DataError


def canonical_hash(obj) -> str:
    """sha256 of the canonical (sorted, compact) JSON encoding of ``obj``."""
    encoded = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


def write_jsonl(path: str | Path, rows: Iterable[dict], meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
            if isinstance(obj, dict) and "_meta" in obj and len(obj) == 1:
                continue
            rows.append(obj)
    return rows


def read_meta(path: str | Path) -> dict | None:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first:
        return None
    try:
        obj = json.loads(first)
    except json.JSONDecodeError:
        return None
    if isinstance(obj, dict) and "_meta" in obj and len(obj) == 1:
        return obj["_meta"]
    return None
