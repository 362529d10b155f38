"""Core record types shared by ingestion, prompting, training, and evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import DataError


class View(str, Enum):
    TWO_CHAMBER = "two-chamber"
    FOUR_CHAMBER = "four-chamber"

    @property
    def token(self) -> str:
        """Filename token (2CH/4CH) for this view."""
        return "2CH" if self is View.TWO_CHAMBER else "4CH"

    @classmethod
    def from_token(cls, token: str) -> "View":
        mapping = {"2CH": cls.TWO_CHAMBER, "4CH": cls.FOUR_CHAMBER}
        try:
            return mapping[token.upper()]
        except KeyError:
            raise DataError(f"unknown view token {token!r}") from None


class Phase(str, Enum):
    END_DIASTOLE = "end-diastole"
    END_SYSTOLE = "end-systole"

    @property
    def token(self) -> str:
        return "ED" if self is Phase.END_DIASTOLE else "ES"

    @classmethod
    def from_token(cls, token: str) -> "Phase":
        mapping = {"ED": cls.END_DIASTOLE, "ES": cls.END_SYSTOLE}
        try:
            return mapping[token.upper()]
        except KeyError:
            raise DataError(f"unknown phase token {token!r}") from None


class Source(str, Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"


class ImageQuality(str, Enum):
    GOOD = "good"
    MEDIUM = "medium"
    POOR = "poor"


class Shape(str, Enum):
    """Allowed values of the structure-shape attribute."""

    CIRCLE = "circle"
    TRIANGLE = "triangle"
    OVAL = "oval"
    SQUARE = "square"
    RECTANGLE = "rectangle"


@dataclass(frozen=True)
class SegmentationTarget:
    """One foreground structure and its integer label in the multiclass mask."""

    name: str
    label_value: int

    def __post_init__(self):
        if self.label_value <= 0:
            raise DataError(
                f"label value for {self.name!r} must be a positive integer, "
                f"got {self.label_value} (0 is background)"
            )


STRUCTURE_NAMES = ("left ventricular cavity", "myocardium", "left atrium cavity")

# CAMUS multiclass convention; overridable through PipelineConfig.label_values.
DEFAULT_TARGETS = (
    SegmentationTarget("left ventricular cavity", 1),
    SegmentationTarget("myocardium", 2),
    SegmentationTarget("left atrium cavity", 3),
)


def make_targets(label_values: dict[str, int]) -> tuple[SegmentationTarget, ...]:
    """Build the target tuple from a name -> label mapping, validating it."""
    unknown = set(label_values) - set(STRUCTURE_NAMES)
    if unknown:
        raise DataError(f"unknown structure names in label mapping: {sorted(unknown)}")
    missing = set(STRUCTURE_NAMES) - set(label_values)
    if missing:
        raise DataError(f"label mapping missing structures: {sorted(missing)}")
    values = list(label_values.values())
    if len(set(values)) != len(values):
        raise DataError(f"label values must be distinct, got {label_values}")
    return tuple(SegmentationTarget(name, label_values[name]) for name in STRUCTURE_NAMES)


@dataclass(frozen=True)
class SampleRecord:
    """One image/mask pair with its identity within the dataset universe.

    ``sample_key`` uniquely identifies the record within a scan.  For real
    records it equals ``{patient_id}_{view}_{phase}``; synthetic records keep
    their full filename stem because the generated set contains several
    variants per originating (patient, view, phase).
    """

    patient_id: str
    view: View
    phase: Phase
    source: Source
    image_ref: str
    mask_ref: str
    sample_key: str

    @property
    def identity(self) -> tuple[str, str, str, str]:
        return (self.patient_id, self.view.value, self.phase.value, self.source.value)

    def to_json_dict(self) -> dict:
        return {
            "sample_key": self.sample_key,
            "patient_id": self.patient_id,
            "view": self.view.value,
            "phase": self.phase.value,
            "source": self.source.value,
            "image_ref": self.image_ref,
            "mask_ref": self.mask_ref,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SampleRecord":
        return cls(
            patient_id=obj["patient_id"],
            view=View(obj["view"]),
            phase=Phase(obj["phase"]),
            source=Source(obj["source"]),
            image_ref=obj["image_ref"],
            mask_ref=obj["mask_ref"],
            sample_key=obj["sample_key"],
        )


@dataclass
class PatientMetadata:
    """Patient-level attributes parsed from the dataset info files."""

    patient_id: str
    sex: Sex
    age: int
    image_quality: dict[str, ImageQuality] = field(default_factory=dict)
    ed_frame: int | None = None
    es_frame: int | None = None

    def __post_init__(self):
        if self.age <= 0:
            raise DataError(
                f"patient {self.patient_id or '<unknown>'}: age must be positive, got {self.age}"
            )

    def quality_for(self, view: View) -> ImageQuality:
        try:
            return self.image_quality[view.value]
        except KeyError:
            raise DataError(
                f"patient {self.patient_id}: no image quality recorded for {view.value} view"
            ) from None

    def to_json_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "sex": self.sex.value,
            "age": self.age,
            "image_quality": {view: q.value for view, q in self.image_quality.items()},
            "ed_frame": self.ed_frame,
            "es_frame": self.es_frame,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PatientMetadata":
        return cls(
            patient_id=obj["patient_id"],
            sex=Sex(obj["sex"]),
            age=int(obj["age"]),
            image_quality={
                view: ImageQuality(q) for view, q in obj.get("image_quality", {}).items()
            },
            ed_frame=obj.get("ed_frame"),
            es_frame=obj.get("es_frame"),
        )


def merge_patient_metadata(parts: list[PatientMetadata]) -> PatientMetadata:
    """Merge per-view metadata records for one patient.

    Patient-level fields must agree across parts; the per-view quality maps
    are unioned.
    """
    if not parts:
        raise DataError("no metadata records to merge")
    first = parts[0]
    quality: dict[str, ImageQuality] = {}
    for part in parts:
        if part.patient_id != first.patient_id:
            raise DataError(
                f"cannot merge metadata of different patients: "
                f"{first.patient_id!r} vs {part.patient_id!r}"
            )
        for key in ("sex", "age"):
            if getattr(part, key) != getattr(first, key):
                raise DataError(
                    f"patient {first.patient_id}: conflicting {key} across info files "
                    f"({getattr(first, key)!r} vs {getattr(part, key)!r})"
                )
        overlap = set(quality) & set(part.image_quality)
        for view_name in overlap:
            if quality[view_name] != part.image_quality[view_name]:
                raise DataError(
                    f"patient {first.patient_id}: conflicting image quality for {view_name}"
                )
        quality.update(part.image_quality)
    return PatientMetadata(
        patient_id=first.patient_id,
        sex=first.sex,
        age=first.age,
        image_quality=quality,
        ed_frame=first.ed_frame,
        es_frame=first.es_frame,
    )


@dataclass
class DatasetSplit:
    """Patient-disjoint train/val/test partition of the real dataset."""

    train: list[SampleRecord]
    val: list[SampleRecord]
    test: list[SampleRecord]

    def __post_init__(self):
        buckets = {"train": self.train, "val": self.val, "test": self.test}
        patient_sets = {name: {r.patient_id for r in recs} for name, recs in buckets.items()}
        names = list(buckets)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                shared = patient_sets[a] & patient_sets[b]
                if shared:
                    raise DataError(
                        f"splits {a} and {b} share patients: {sorted(shared)[:5]}"
                    )
        for name, recs in buckets.items():
            synthetic = [r.sample_key for r in recs if r.source is Source.SYNTHETIC]
            if synthetic:
                raise DataError(
                    f"synthetic records are not allowed in the real {name} split: "
                    f"{synthetic[:5]}"
                )

    def patients(self, bucket: str) -> set[str]:
        return {r.patient_id for r in getattr(self, bucket)}


def write_manifest(records: list[SampleRecord], path: str | Path, **extra_fields) -> None:
    """Write records as line-delimited JSON with resolved absolute locators."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            obj = record.to_json_dict()
            obj["image_ref"] = str(Path(obj["image_ref"]).resolve())
            obj["mask_ref"] = str(Path(obj["mask_ref"]).resolve())
            obj.update(extra_fields)
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[SampleRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(SampleRecord.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: bad manifest line ({exc})") from exc
    return records
