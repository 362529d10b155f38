"""Shared fixtures: miniature dataset trees and model specs for fast tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from echo_vlsm.models.spec import ModelKind, ModelSpec

QUALITIES = ("Poor", "Good", "Medium")


def blob_mask(size: int = 32, jitter: int = 0) -> np.ndarray:
    """Multiclass mask: label-2 ring around a label-1 disk, label-3 disk apart.

    All three structures are nonempty (the ring is painted before its core).
    """
    yy, xx = np.mgrid[0:size, 0:size]
    mask = np.zeros((size, size), dtype=np.uint8)
    cy, cx = size // 3 + jitter % 3, size // 3
    mask[(yy - cy) ** 2 + (xx - cx) ** 2 <= 9 * 9] = 2
    mask[(yy - cy) ** 2 + (xx - cx) ** 2 <= 5 * 5] = 1
    oy, ox = 3 * size // 4, 3 * size // 4 - jitter % 2
    mask[(yy - oy) ** 2 + (xx - ox) ** 2 <= 4 * 4] = 3
    return mask


def image_for_mask(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Intensity image whose brightness bands track the mask labels."""
    image = rng.normal(40.0, 6.0, size=mask.shape)
    image[mask == 1] += 150
    image[mask == 2] += 70
    image[mask == 3] += 110
    return np.clip(image, 0, 255).astype(np.uint8)


def write_sample(image_path: Path, mask_path: Path, *, jitter: int, size: int, rng) -> None:
    mask = blob_mask(size=size, jitter=jitter)
    np.save(mask_path, mask)
    np.save(image_path, image_for_mask(mask, rng))


def build_camus_tree(
    root: Path,
    patient_ids: list[str],
    *,
    size: int = 32,
    test_patients: list[str] | None = None,
    seed: int = 0,
) -> Path:
    """CAMUS-layout tree: per-patient image/mask pairs plus info files."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for i, pid in enumerate(patient_ids):
        pdir = root / pid
        pdir.mkdir(exist_ok=True)
        for view in ("2CH", "4CH"):
            for phase in ("ED", "ES"):
                stem = f"{pid}_{view}_{phase}"
                write_sample(
                    pdir / f"{stem}.npy", pdir / f"{stem}_gt.npy",
                    jitter=i, size=size, rng=rng,
                )
            (pdir / f"Info_{view}.cfg").write_text(
                f"Sex: {'F' if i % 2 == 0 else 'M'}\n"
                f"Age: {38 + i}\n"
                f"ImageQuality: {QUALITIES[i % 3]}\n"
                "ED: 1\nES: 20\n",
                encoding="utf-8",
            )
    if test_patients is not None:
        (root / "subgroup_testing.txt").write_text(
            "\n".join(test_patients) + "\n", encoding="utf-8"
        )
    return root


def build_sdm_tree(
    root: Path,
    *,
    train: int = 8,
    val: int = 4,
    size: int = 32,
    patient_ids: list[str] | None = None,
    seed: int = 1,
) -> Path:
    """Synthetic-layout tree: split/{images,masks} with variant-suffixed stems."""
    rng = np.random.default_rng(seed)
    patient_ids = patient_ids or [f"patient{i:04d}" for i in range(1, 4)]
    for split, count in (("train", train), ("val", val)):
        (root / split / "images").mkdir(parents=True, exist_ok=True)
        (root / split / "masks").mkdir(parents=True, exist_ok=True)
        for j in range(count):
            pid = patient_ids[j % len(patient_ids)]
            view = ("2CH", "4CH")[j % 2]
            phase = ("ED", "ES")[(j // 2) % 2]
            stem = f"{pid}_{view}_{phase}_s{split[0]}{j}"
            write_sample(
                root / split / "images" / f"{stem}.npy",
                root / split / "masks" / f"{stem}.npy",
                jitter=j, size=size, rng=rng,
            )
    return root


@pytest.fixture
def camus_tree(tmp_path):
    patients = [f"patient{i:04d}" for i in range(1, 6)]
    return build_camus_tree(
        tmp_path / "camus", patients, test_patients=[patients[-1]]
    )


@pytest.fixture
def sdm_tree(tmp_path):
    return build_sdm_tree(tmp_path / "sdm")


@pytest.fixture
def stub_spec():
    return ModelSpec.for_kind(ModelKind.STUB, input_size=32)


def write_pipeline_config(
    path: Path,
    camus_root: Path,
    sdm_root: Path,
    out_dir: Path,
    *,
    strategies=("real", "synthetic", "synth-PT:real-FT"),
    levels=(1, 6),
    freeze_flags=("frozen",),
    seed: int = 3,
    max_epochs: int = 2,
    extra: str = "",
) -> Path:
    strategy_list = ", ".join(f'"{s}"' for s in strategies)
    flag_list = ", ".join(str(f) for f in freeze_flags)
    path.write_text(
        f"""
camus_root: {camus_root}
sdm_root: {sdm_root}
output_dir: {out_dir}
seed: {seed}
val_patient_count: 1
vqa:
  kind: stub
  stub_default: oval
matrix:
  model_kinds: [stub]
  strategies: [{strategy_list}]
  levels: {list(levels)}
  freeze_flags: [{flag_list}]
training:
  max_epochs: {max_epochs}
  batch_size: 4
{extra}""",
        encoding="utf-8",
    )
    return path
