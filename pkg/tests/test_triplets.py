import numpy as np
import pytest

from echo_vlsm.datasets.camus import read_patient_metadata, scan_camus
from echo_vlsm.errors import PromptError
from echo_vlsm.prompts.triplets import (
    emit_triplets,
    materialize_binary_masks,
    read_triplets,
    structure_slug,
    write_triplets,
)
from echo_vlsm.records import DEFAULT_TARGETS, Shape, Source


@pytest.fixture
def scanned(camus_tree):
    records = scan_camus(camus_tree)[:8]  # patients 1 and 2
    metadata = {
        pid: read_patient_metadata(camus_tree / pid)
        for pid in {r.patient_id for r in records}
    }
    return records, metadata


def all_shapes(records):
    return {
        (record.sample_key, target.name): Shape.OVAL
        for record in records
        for target in DEFAULT_TARGETS
    }


def test_structure_slug():
    assert structure_slug("left ventricular cavity") == "left-ventricular-cavity"


class TestMaterialize:
    def test_binary_masks_match_labels(self, scanned, tmp_path):
        records, _ = scanned
        refs = materialize_binary_masks(records, DEFAULT_TARGETS, tmp_path / "masks")
        assert len(refs) == len(records) * len(DEFAULT_TARGETS)
        record = records[0]
        multi = np.load(record.mask_ref)
        for target in DEFAULT_TARGETS:
            binary = np.load(refs[(record.sample_key, target.name)])
            np.testing.assert_array_equal(binary, (multi == target.label_value))

    def test_existing_masks_skipped_unless_forced(self, scanned, tmp_path):
        records, _ = scanned
        masks_dir = tmp_path / "masks"
        refs = materialize_binary_masks(records[:1], DEFAULT_TARGETS, masks_dir)
        probe = next(iter(refs.values()))
        np.save(probe, np.zeros((2, 2), dtype=bool))  # corrupt one output
        materialize_binary_masks(records[:1], DEFAULT_TARGETS, masks_dir)
        assert np.load(probe).shape == (2, 2)  # untouched without force
        materialize_binary_masks(records[:1], DEFAULT_TARGETS, masks_dir, force=True)
        assert np.load(probe).shape == (32, 32)  # regenerated


class TestEmit:
    def test_counts_and_order(self, scanned, tmp_path):
        records, metadata = scanned
        refs = materialize_binary_masks(records, DEFAULT_TARGETS, tmp_path / "masks")
        entries = emit_triplets(
            records, DEFAULT_TARGETS, [1, 3],
            source=Source.REAL, split="train", metadata=metadata,
            shapes={}, binary_mask_refs=refs,
        )
        assert len(entries) == len(records) * len(DEFAULT_TARGETS) * 2
        first = entries[0]
        assert first.sample_key == records[0].sample_key
        assert first.structure == DEFAULT_TARGETS[0].name
        assert first.level == 1
        assert first.prompt == "Left ventricular cavity."
        rerun = emit_triplets(
            records, DEFAULT_TARGETS, [1, 3],
            source=Source.REAL, split="train", metadata=metadata,
            shapes={}, binary_mask_refs=refs,
        )
        assert entries == rerun

    def test_shape_level_renders_shape_clause(self, scanned, tmp_path):
        records, metadata = scanned
        refs = materialize_binary_masks(records, DEFAULT_TARGETS, tmp_path / "masks")
        entries = emit_triplets(
            records, DEFAULT_TARGETS, [7],
            source=Source.REAL, split="train", metadata=metadata,
            shapes=all_shapes(records), binary_mask_refs=refs,
        )
        assert len(entries) == len(records) * len(DEFAULT_TARGETS)
        assert all(" of oval shape" in e.prompt for e in entries)

    def test_missing_shape_excludes_entry_with_log(self, scanned, tmp_path, caplog):
        records, metadata = scanned
        refs = materialize_binary_masks(records, DEFAULT_TARGETS, tmp_path / "masks")
        shapes = all_shapes(records)
        del shapes[(records[0].sample_key, DEFAULT_TARGETS[0].name)]
        with caplog.at_level("INFO"):
            entries = emit_triplets(
                records, DEFAULT_TARGETS, [7],
                source=Source.REAL, split="train", metadata=metadata,
                shapes=shapes, binary_mask_refs=refs,
            )
        assert len(entries) == len(records) * len(DEFAULT_TARGETS) - 1
        assert any("shape" in m.lower() for m in caplog.messages)

    def test_missing_other_attribute_is_hard_error(self, scanned, tmp_path):
        records, metadata = scanned
        refs = materialize_binary_masks(records, DEFAULT_TARGETS, tmp_path / "masks")
        with pytest.raises(PromptError, match="sex"):
            emit_triplets(
                records, DEFAULT_TARGETS, [4],
                source=Source.REAL, split="train", metadata={},
                shapes={}, binary_mask_refs=refs,
            )

    def test_wrong_source_rejected(self, scanned, tmp_path):
        records, metadata = scanned
        refs = materialize_binary_masks(records, DEFAULT_TARGETS, tmp_path / "masks")
        with pytest.raises(PromptError, match="source"):
            emit_triplets(
                records, DEFAULT_TARGETS, [1],
                source=Source.SYNTHETIC, split="train", metadata=metadata,
                shapes={}, binary_mask_refs=refs,
            )

    def test_missing_binary_mask_is_hard_error(self, scanned):
        records, metadata = scanned
        with pytest.raises(PromptError, match="binary mask"):
            emit_triplets(
                records, DEFAULT_TARGETS, [1],
                source=Source.REAL, split="train", metadata=metadata,
                shapes={}, binary_mask_refs={},
            )

    def test_round_trip(self, scanned, tmp_path):
        records, metadata = scanned
        refs = materialize_binary_masks(records, DEFAULT_TARGETS, tmp_path / "masks")
        entries = emit_triplets(
            records, DEFAULT_TARGETS, [0, 2],
            source=Source.REAL, split="val", metadata=metadata,
            shapes={}, binary_mask_refs=refs,
        )
        path = tmp_path / "triplets.jsonl"
        write_triplets(entries, path, meta={"config_hash": "abc"})
        assert read_triplets(path) == entries
