import numpy as np
import pytest

from conftest import build_camus_tree, build_sdm_tree

from echo_vlsm.datasets.camus import (
    REFERENCE_IMAGE_COUNTS,
    load_test_patients,
    parse_metadata,
    read_patient_metadata,
    scan_camus,
    split_diagnostics,
    split_official,
)
from echo_vlsm.datasets.sdm import parse_synthetic_stem, scan_sdm
from echo_vlsm.errors import DataError
from echo_vlsm.records import ImageQuality, Phase, Sex, Source, View


class TestScanCamus:
    def test_full_scan(self, camus_tree):
        records = scan_camus(camus_tree)
        assert len(records) == 5 * 4
        keys = [r.sample_key for r in records]
        assert keys == sorted(keys)
        assert keys[0] == "patient0001_2CH_ED"
        assert all(r.source is Source.REAL for r in records)

    def test_missing_mask_is_hard_error(self, camus_tree):
        (camus_tree / "patient0002" / "patient0002_2CH_ED_gt.npy").unlink()
        with pytest.raises(DataError, match="patient0002.*2CH.*ED"):
            scan_camus(camus_tree)

    def test_missing_info_file_is_hard_error(self, camus_tree):
        (camus_tree / "patient0003" / "Info_4CH.cfg").unlink()
        with pytest.raises(DataError, match="Info_4CH.cfg"):
            scan_camus(camus_tree)

    def test_non_patient_dirs_ignored(self, camus_tree):
        (camus_tree / "extras").mkdir()
        assert len(scan_camus(camus_tree)) == 5 * 4

    def test_missing_root(self, tmp_path):
        with pytest.raises(DataError, match="not a directory"):
            scan_camus(tmp_path / "nope")


class TestParseMetadata:
    def test_colon_and_equals_separators(self):
        meta = parse_metadata(
            "Sex = F\nAge: 40\nImageQuality: Poor\nED: 1\nES: 20\nNbFrame: 25\n",
            patient_id="patient0001", view=View.TWO_CHAMBER,
        )
        assert meta.sex is Sex.FEMALE
        assert meta.age == 40
        assert meta.quality_for(View.TWO_CHAMBER) is ImageQuality.POOR
        assert meta.ed_frame == 1 and meta.es_frame == 20

    def test_age_accepts_float_text(self):
        meta = parse_metadata("Sex: M\nAge: 40.0\nImageQuality: Good\n")
        assert meta.age == 40

    def test_missing_required_key(self):
        with pytest.raises(DataError, match="Age"):
            parse_metadata("Sex: F\nImageQuality: Good\n", patient_id="patient0001")

    def test_unknown_sex(self):
        with pytest.raises(DataError, match="Sex"):
            parse_metadata("Sex: X\nAge: 40\nImageQuality: Good\n")

    def test_unknown_quality(self):
        with pytest.raises(DataError, match="ImageQuality"):
            parse_metadata("Sex: F\nAge: 40\nImageQuality: Excellent\n")

    def test_read_patient_metadata_merges_views(self, camus_tree):
        meta = read_patient_metadata(camus_tree / "patient0001")
        assert meta.quality_for(View.TWO_CHAMBER) is meta.quality_for(View.FOUR_CHAMBER)
        assert meta.patient_id == "patient0001"


class TestTestPatients:
    def test_from_listing_file(self, camus_tree):
        assert load_test_patients("subgroup_testing.txt", root=camus_tree) == {
            "patient0005"
        }

    def test_from_explicit_list(self):
        assert load_test_patients(["patient0009", " patient0010 "]) == {
            "patient0009", "patient0010",
        }

    def test_missing_listing(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_test_patients("nonexistent.txt", root=tmp_path)

    def test_empty_set_rejected(self):
        with pytest.raises(DataError, match="empty"):
            load_test_patients([])


class TestSplit:
    def test_official_split_partition(self, camus_tree):
        records = scan_camus(camus_tree)
        split = split_official(records, {"patient0005"}, val_patient_count=2)
        assert split.patients("test") == {"patient0005"}
        assert split.patients("val") == {"patient0001", "patient0002"}
        assert split.patients("train") == {"patient0003", "patient0004"}
        assert len(split.test) == 4 and len(split.val) == 8 and len(split.train) == 8

    def test_absent_test_patient(self, camus_tree):
        records = scan_camus(camus_tree)
        with pytest.raises(DataError, match="patient9999"):
            split_official(records, {"patient9999"})

    def test_diagnostics_mention_reference_counts(self, camus_tree):
        records = scan_camus(camus_tree)
        split = split_official(records, {"patient0005"}, val_patient_count=2)
        notes = split_diagnostics(split)
        assert len(notes) == 3  # every bucket is tiny vs the published counts
        assert any(str(REFERENCE_IMAGE_COUNTS["train"]) in note for note in notes)


class TestScanSdm:
    def test_full_scan(self, sdm_tree):
        splits = scan_sdm(sdm_tree)
        assert {name: len(records) for name, records in splits.items()} == {
            "train": 8, "val": 4,
        }
        record = splits["train"][0]
        assert record.source is Source.SYNTHETIC
        assert record.sample_key.startswith(record.patient_id)

    def test_count_mismatch_warns_not_raises(self, sdm_tree, caplog):
        with caplog.at_level("WARNING"):
            scan_sdm(sdm_tree)
        assert any("8000" in message for message in caplog.messages)

    def test_stem_parsing(self):
        pid, view, phase = parse_synthetic_stem("patient0123_4ch_es_variant9")
        assert (pid, view, phase) == ("patient0123", View.FOUR_CHAMBER, Phase.END_SYSTOLE)

    def test_unparsable_stem(self, sdm_tree):
        np.save(sdm_tree / "train" / "images" / "mystery.npy", np.zeros((4, 4)))
        np.save(sdm_tree / "train" / "masks" / "mystery.npy", np.zeros((4, 4)))
        with pytest.raises(DataError, match="mystery"):
            scan_sdm(sdm_tree)

    def test_unpaired_stem(self, sdm_tree):
        np.save(sdm_tree / "train" / "images" / "patient0001_2CH_ED_extra.npy",
                np.zeros((4, 4)))
        with pytest.raises(DataError, match="pair"):
            scan_sdm(sdm_tree)

    def test_missing_masks_dir(self, tmp_path):
        (tmp_path / "train" / "images").mkdir(parents=True)
        with pytest.raises(DataError, match="masks"):
            scan_sdm(tmp_path)

    def test_alias_directories(self, tmp_path):
        build_sdm_tree(tmp_path, train=2, val=1)
        (tmp_path / "train").rename(tmp_path / "training")
        (tmp_path / "val").rename(tmp_path / "validation")
        splits = scan_sdm(tmp_path)
        assert len(splits["train"]) == 2 and len(splits["val"]) == 1
