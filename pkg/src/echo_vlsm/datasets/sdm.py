"""Discovery of the published synthetic (diffusion-generated) dataset.

Expected tree: ``root/{train,val}/images`` and ``root/{train,val}/masks`` with
matching filename stems.  Stems must carry the originating patient, view, and
phase (``patient0123_2CH_ED`` plus an optional variant suffix) so prompts can
reuse the original patient's attributes; anything unparsable is a hard error.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path

from ..errors import DataError
from ..records import Phase, SampleRecord, Source, View
from .readers import SUPPORTED_EXTENSIONS

log = logging.getLogger(__name__)

EXPECTED_COUNTS = {"train": 8000, "val": 1000}

STEM_RE = re.compile(r"^(patient\d+)_(2CH|4CH)_(ED|ES)(?:[._-].*)?$", re.IGNORECASE)

_SPLIT_DIR_ALIASES = {
    "train": ("train", "training"),
    "val": ("val", "validation"),
}


def parse_synthetic_stem(stem: str) -> tuple[str, View, Phase]:
    match = STEM_RE.match(stem)
    if match is None:
        raise DataError(
            f"synthetic filename {stem!r} does not carry the originating "
            "patient/view/phase (expected patientNNNN_<2CH|4CH>_<ED|ES>[...])"
        )
    patient_id, view_token, phase_token = match.groups()
    return patient_id.lower(), View.from_token(view_token), Phase.from_token(phase_token)


def _index_dir(directory: Path) -> dict[str, Path]:
    files: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in SUPPORTED_EXTENSIONS or not path.is_file():
            continue
        if path.stem in files:
            raise DataError(f"duplicate stem {path.stem!r} in {directory}")
        files[path.stem] = path
    return files


def _scan_split(split_root: Path) -> list[SampleRecord]:
    image_dir = split_root / "images"
    mask_dir = split_root / "masks"
    for directory in (image_dir, mask_dir):
        if not directory.is_dir():
            raise DataError(f"synthetic split is missing directory {directory}")
    images = _index_dir(image_dir)
    masks = _index_dir(mask_dir)

    unmatched = sorted(set(images) ^ set(masks))
    if unmatched:
        raise DataError(
            f"{split_root}: image/mask stems do not pair up, e.g. {unmatched[:5]}"
        )

    records = []
    for stem in sorted(images):
        patient_id, view, phase = parse_synthetic_stem(stem)
        records.append(
            SampleRecord(
                patient_id=patient_id,
                view=view,
                phase=phase,
                source=Source.SYNTHETIC,
                image_ref=str(images[stem]),
                mask_ref=str(masks[stem]),
                sample_key=stem,
            )
        )
    return records


def scan_sdm(root: str | Path) -> dict[str, list[SampleRecord]]:
    """Scan the synthetic tree into train/val record lists, all source=synthetic.

    A count differing from the published 8,000/1,000 is a logged warning with
    both numbers; unpairable or unparsable files are hard errors.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"synthetic dataset root is not a directory: {root}")

    splits: dict[str, list[SampleRecord]] = {}
    for split, aliases in _SPLIT_DIR_ALIASES.items():
        split_root = next((root / name for name in aliases if (root / name).is_dir()), None)
        if split_root is None:
            log.warning("synthetic tree has no %s directory under %s; 0 records", split, root)
            splits[split] = []
            continue
        splits[split] = _scan_split(split_root)

    for split, records in splits.items():
        expected = EXPECTED_COUNTS[split]
        if len(records) != expected:
            log.warning(
                "synthetic %s split has %d records, published set has %d",
                split, len(records), expected,
            )
    return splits
