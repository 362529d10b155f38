"""Discovery, metadata parsing, and splitting for the real CAMUS-layout dataset.

Expected tree: per-patient directories (``patient0001`` ...) holding one image
and one ``_gt`` mask per (view, phase) plus an ``Info_<view>.cfg`` key-value
file per available view.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path

from ..errors import DataError
from ..records import (
    ImageQuality,
    PatientMetadata,
    Phase,
    SampleRecord,
    Sex,
    Source,
    View,
    DatasetSplit,
    merge_patient_metadata,
)
from .readers import SUPPORTED_EXTENSIONS

log = logging.getLogger(__name__)

PATIENT_DIR_RE = re.compile(r"^patient\d+$")

# Published split sizes for the 500-patient universe (images, at 2 views x 2
# phases per patient).  The val row is the commonly quoted reference figure;
# patient arithmetic (50 patients x 4) gives 200 -- see split_diagnostics.
REFERENCE_IMAGE_COUNTS = {"train": 1600, "val": 400, "test": 200}
VAL_PATIENT_COUNT = 50

_SEX_VALUES = {"m": Sex.MALE, "male": Sex.MALE, "f": Sex.FEMALE, "female": Sex.FEMALE}
_QUALITY_VALUES = {q.value: q for q in ImageQuality}


def _find_pair(patient_dir: Path, stem: str) -> tuple[Path | None, Path | None]:
    image = mask = None
    for ext in SUPPORTED_EXTENSIONS:
        if image is None and (patient_dir / f"{stem}{ext}").is_file():
            image = patient_dir / f"{stem}{ext}"
        if mask is None and (patient_dir / f"{stem}_gt{ext}").is_file():
            mask = patient_dir / f"{stem}_gt{ext}"
    return image, mask


def scan_camus(root: str | Path) -> list[SampleRecord]:
    """Scan a CAMUS-layout tree into sorted real-source sample records.

    An image without its mask is a hard error naming patient/view/phase, as is
    an unreadable or invalid info file for a view that has images.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"CAMUS root is not a directory: {root}")

    records: list[SampleRecord] = []
    for patient_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if not PATIENT_DIR_RE.match(patient_dir.name):
            continue
        patient_id = patient_dir.name
        for view in (View.TWO_CHAMBER, View.FOUR_CHAMBER):
            view_has_images = False
            for phase in (Phase.END_DIASTOLE, Phase.END_SYSTOLE):
                stem = f"{patient_id}_{view.token}_{phase.token}"
                image, mask = _find_pair(patient_dir, stem)
                if image is None:
                    continue
                if mask is None:
                    raise DataError(
                        f"missing mask for {patient_id}/{view.token}/{phase.token} "
                        f"(image: {image})"
                    )
                view_has_images = True
                records.append(
                    SampleRecord(
                        patient_id=patient_id,
                        view=view,
                        phase=phase,
                        source=Source.REAL,
                        image_ref=str(image),
                        mask_ref=str(mask),
                        sample_key=stem,
                    )
                )
            if view_has_images:
                # Metadata must be readable for every view we took images from.
                read_patient_metadata(patient_dir, views=(view,))

    records.sort(key=lambda r: (r.patient_id, r.view.token, r.phase.token))
    seen: set[str] = set()
    for record in records:
        if record.sample_key in seen:
            raise DataError(f"duplicate sample {record.sample_key} in scan")
        seen.add(record.sample_key)
    return records


def parse_metadata(cfg_text: str, *, patient_id: str = "", view: View | None = None) -> PatientMetadata:
    """Parse one info file (key-value lines) into patient metadata.

    Keys follow the public CAMUS convention (``Sex``, ``Age``,
    ``ImageQuality``, ``ED``, ``ES``); either ``:`` or ``=`` separates key and
    value, and unknown keys are ignored.
    """
    values: dict[str, str] = {}
    for line in cfg_text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        sep_positions = [(line.find(sep), sep) for sep in (":", "=") if sep in line]
        if not sep_positions:
            continue
        _, sep = min(sep_positions)
        key, value = (part.strip() for part in line.split(sep, 1))
        values[key] = value

    missing = [key for key in ("Sex", "Age", "ImageQuality") if key not in values]
    if missing:
        raise DataError(
            f"metadata for patient {patient_id or '<unknown>'} missing keys: {missing}"
        )

    sex = _SEX_VALUES.get(values["Sex"].strip().lower())
    if sex is None:
        raise DataError(f"unrecognized Sex value {values['Sex']!r}")
    try:
        age = int(float(values["Age"]))
    except ValueError:
        raise DataError(f"unparsable Age value {values['Age']!r}") from None
    quality = _QUALITY_VALUES.get(values["ImageQuality"].strip().lower())
    if quality is None:
        raise DataError(f"unrecognized ImageQuality value {values['ImageQuality']!r}")

    def _frame(key: str) -> int | None:
        if key not in values:
            return None
        try:
            return int(float(values[key]))
        except ValueError:
            raise DataError(f"unparsable {key} value {values[key]!r}") from None

    quality_map = {view.value: quality} if view is not None else {}
    return PatientMetadata(
        patient_id=patient_id,
        sex=sex,
        age=age,
        image_quality=quality_map,
        ed_frame=_frame("ED"),
        es_frame=_frame("ES"),
    )


def read_patient_metadata(
    patient_dir: str | Path,
    views: tuple[View, ...] = (View.TWO_CHAMBER, View.FOUR_CHAMBER),
) -> PatientMetadata:
    """Read and merge the per-view info files of one patient directory."""
    patient_dir = Path(patient_dir)
    patient_id = patient_dir.name
    parts = []
    for view in views:
        cfg_path = patient_dir / f"Info_{view.token}.cfg"
        if not cfg_path.is_file():
            raise DataError(f"missing info file {cfg_path}")
        try:
            text = cfg_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"unreadable info file {cfg_path}: {exc}") from exc
        parts.append(parse_metadata(text, patient_id=patient_id, view=view))
    return merge_patient_metadata(parts)


def load_test_patients(source: str | Path | list[str], root: str | Path | None = None) -> set[str]:
    """Resolve the official test-patient set from a list or a listing file.

    The official membership was sampled by the dataset authors and cannot be
    derived; it must come from a listing file (one patient id per line,
    default ``subgroup_testing.txt`` under the dataset root) or an explicit
    list in the config.
    """
    if isinstance(source, (list, tuple, set)):
        patients = {str(p).strip() for p in source if str(p).strip()}
    else:
        path = Path(source)
        if not path.is_absolute() and root is not None:
            path = Path(root) / path
        if not path.is_file():
            raise DataError(
                f"official test-patient listing not found: {path}; provide "
                "test_patients or test_patients_file in the config"
            )
        patients = {
            line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()
        }
    if not patients:
        raise DataError("official test-patient set is empty")
    return patients


def split_official(
    records: list[SampleRecord],
    test_patients: set[str],
    val_patient_count: int = VAL_PATIENT_COUNT,
) -> DatasetSplit:
    """Split scanned records: official test patients out, then the first
    ``val_patient_count`` remaining patients (ascending id) to val, rest to train."""
    all_patients = sorted({r.patient_id for r in records})
    missing_test = sorted(test_patients - set(all_patients))
    if missing_test:
        raise DataError(
            f"official test patients absent from the scan: {missing_test[:5]}"
            + ("..." if len(missing_test) > 5 else "")
        )

    remaining = [p for p in all_patients if p not in test_patients]
    val_patients = set(remaining[:val_patient_count])
    train_patients = set(remaining[val_patient_count:])

    buckets: dict[str, list[SampleRecord]] = {"train": [], "val": [], "test": []}
    for record in records:
        if record.patient_id in test_patients:
            buckets["test"].append(record)
        elif record.patient_id in val_patients:
            buckets["val"].append(record)
        elif record.patient_id in train_patients:
            buckets["train"].append(record)
        else:
            raise DataError(f"patient {record.patient_id} fell into no split bucket")
    return DatasetSplit(**buckets)


def split_diagnostics(split: DatasetSplit) -> list[str]:
    """Non-fatal notes comparing the split against the published reference counts.

    In particular the patient-based validation count (50 patients -> 200
    images) disagrees with the commonly quoted reference figure of 400; that
    discrepancy is surfaced here, never silently resolved.
    """
    notes = []
    for name in ("train", "val", "test"):
        actual = len(getattr(split, name))
        expected = REFERENCE_IMAGE_COUNTS[name]
        if actual != expected:
            note = (
                f"{name} split: {actual} image records vs published reference count {expected}"
            )
            if name == "val" and len(split.patients("val")) == VAL_PATIENT_COUNT:
                note += (
                    f" (patient arithmetic: {VAL_PATIENT_COUNT} patients x 4 images = "
                    f"{VAL_PATIENT_COUNT * 4}; the reference figure of {expected} cannot be "
                    "reconciled with the patient split and is reported, not enforced)"
                )
            notes.append(note)
    return notes
