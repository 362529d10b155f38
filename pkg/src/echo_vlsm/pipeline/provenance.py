"""Stage provenance: every artifact embeds the config hash that produced it."""

from __future__ import annotations

import json
from pathlib import Path

from .. import __version__
from ..errors import DataError, StaleArtifactError


def write_provenance(path: str | Path, stage: str, config_hash: str, **payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "stage": stage,
        "config_hash": config_hash,
        "version": __version__,
        **payload,
    }
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_provenance(path: str | Path) -> dict | None:
    path = Path(path)
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt provenance file {path}: {exc}") from exc


def stage_complete(path: str | Path, config_hash: str) -> bool:
    record = read_provenance(path)
    return record is not None and record.get("config_hash") == config_hash


def require_fresh(path: str | Path, stage: str, config_hash: str) -> dict:
    """Assert the upstream stage ran under the current configuration."""
    record = read_provenance(path)
    if record is None:
        raise DataError(
            f"stage {stage!r} has not run yet (no provenance at {path}); run it first"
        )
    if record.get("config_hash") != config_hash:
        raise StaleArtifactError(
            f"stage {stage!r} artifacts were produced under a different "
            f"configuration (hash {record.get('config_hash')!r} != current "
            f"{config_hash!r}); regenerate them or pass --force"
        )
    return record
