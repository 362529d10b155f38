import json

import numpy as np
import pytest

from echo_vlsm.errors import IncompleteMatrixError
from echo_vlsm.evaluation.evaluate import DiceResult
from echo_vlsm.evaluation.report import (
    COMPARISONS,
    CONVERGENCE,
    CONVERGENCE_SUMMARY,
    DIFFERENCE_SERIES,
    FREEZE_EFFECT,
    GRID_BY_STRUCTURE,
    GRID_POOLED,
    REPORT_JSON,
    ReportRun,
    make_report,
    structural_na,
)
from echo_vlsm.models.spec import ModelKind
from echo_vlsm.records import STRUCTURE_NAMES
from echo_vlsm.training.config import ExperimentConfig, Strategy
from echo_vlsm.training.loop import EpochStats, TrainingHistory

SAMPLES = [f"patient{i:04d}_2CH_ED" for i in range(1, 5)]

STRATEGY_BASE = {
    Strategy.REAL: 0.80,
    Strategy.SYNTHETIC: 0.70,
    Strategy.SYNTH_PT_REAL_FT: 0.85,
}


def history_with_best(best_epoch, total=10):
    dices = [0.05 * (i + 1) for i in range(total)]
    dices[best_epoch - 1] = 0.99
    return TrainingHistory.from_epochs([
        EpochStats(epoch=i + 1, train_loss=1.0, val_loss=1.0, val_dice=d,
                   learning_rate=1e-3)
        for i, d in enumerate(dices)
    ])


def make_run(strategy, level, trainable=False, *, values=None, best_epoch=3, seed=0):
    config = ExperimentConfig.for_kind(
        ModelKind.STUB, strategy, level, trainable,
        seed=seed, max_epochs=10, batch_size=8,
    )
    if values is None:
        base = STRATEGY_BASE[strategy]
        values = [
            round(base + 0.002 * k - 0.001 * level, 6)
            for k in range(len(SAMPLES) * len(STRUCTURE_NAMES))
        ]
    results = [
        DiceResult(sample_key=sample, structure=structure, level=level, dice=value)
        for value, (sample, structure) in zip(
            values,
            [(s, st) for s in SAMPLES for st in STRUCTURE_NAMES],
        )
    ]
    return ReportRun(
        config=config, results=results, history=history_with_best(best_epoch)
    )


def matrix(strategies, levels, freeze_flags=(False,)):
    return {
        "model_kinds": ["stub"],
        "strategies": list(strategies),
        "levels": list(levels),
        "freeze_flags": list(freeze_flags),
    }


class TestStructuralNa:
    def test_only_synthetic_above_p6(self):
        assert structural_na(Strategy.SYNTHETIC, 7)
        assert not structural_na(Strategy.SYNTHETIC, 6)
        assert not structural_na(Strategy.REAL, 7)
        assert not structural_na(Strategy.SYNTH_PT_REAL_FT, 7)


class TestGridRendering:
    def test_pooled_cell_is_percent_mean_std(self, tmp_path):
        values = [0.8] * 6 + [0.9] * 6  # mean 0.85, std 0.05
        run = make_run(Strategy.REAL, 1, values=values)
        make_report([run], matrix(["real"], [1]), tmp_path)
        lines = (tmp_path / GRID_POOLED).read_text().splitlines()
        assert lines[0].split("\t") == (
            ["model", "strategy", "encoders"] + [f"P{k}" for k in range(8)]
        )
        row = lines[1].split("\t")
        assert row[:3] == ["stub", "real", "frozen"]
        assert row[3 + 1] == "85.00 ± 5.00"  # P1 column
        assert row[3] == ""  # P0 not requested

    def test_structural_na_and_blank_cells(self, tmp_path):
        run = make_run(Strategy.SYNTHETIC, 6)
        make_report([run], matrix(["synthetic"], [6, 7]), tmp_path)
        row = (tmp_path / GRID_POOLED).read_text().splitlines()[1].split("\t")
        assert row[3 + 7] == "N/A"
        assert row[3 + 6] != "" and row[3 + 6] != "N/A"
        assert all(row[3 + k] == "" for k in range(6))

    def test_by_structure_grid_has_one_row_per_structure(self, tmp_path):
        run = make_run(Strategy.REAL, 2)
        make_report([run], matrix(["real"], [2]), tmp_path)
        lines = (tmp_path / GRID_BY_STRUCTURE).read_text().splitlines()
        assert len(lines) == 1 + len(STRUCTURE_NAMES)
        assert [line.split("\t")[3] for line in lines[1:]] == list(STRUCTURE_NAMES)

    def test_missing_cell_names_the_cell(self, tmp_path):
        run = make_run(Strategy.REAL, 1)
        with pytest.raises(
            IncompleteMatrixError,
            match=r"\(model=stub, strategy=real, level=P2, encoders=frozen\)",
        ):
            make_report([run], matrix(["real"], [1, 2]), tmp_path)

    def test_empty_results_count_as_missing(self, tmp_path):
        run = make_run(Strategy.REAL, 1)
        run.results = []
        with pytest.raises(IncompleteMatrixError, match="missing results"):
            make_report([run], matrix(["real"], [1]), tmp_path)

    def test_duplicate_cell_rejected(self, tmp_path):
        a = make_run(Strategy.REAL, 1, seed=0)
        b = make_run(Strategy.REAL, 1, seed=1)  # same cell, different slug
        with pytest.raises(IncompleteMatrixError, match="duplicate"):
            make_report([a, b], matrix(["real"], [1]), tmp_path)

    def test_rerender_is_byte_identical(self, tmp_path):
        runs = [
            make_run(strategy, level, trainable)
            for strategy in (Strategy.REAL, Strategy.SYNTHETIC)
            for level in (1, 2)
            for trainable in (False, True)
        ]
        spec = matrix(["real", "synthetic"], [1, 2], [False, True])
        first_dir, second_dir = tmp_path / "one", tmp_path / "two"
        make_report(runs, spec, first_dir, meta={"config_hash": "abc"})
        make_report(runs, spec, second_dir, meta={"config_hash": "abc"})
        names = sorted(p.name for p in first_dir.iterdir())
        assert names == sorted(p.name for p in second_dir.iterdir())
        for name in names:
            assert (first_dir / name).read_bytes() == (second_dir / name).read_bytes()


class TestSeries:
    def test_difference_series_is_strategy_minus_real(self, tmp_path):
        real = make_run(Strategy.REAL, 1, values=[0.8] * 12)
        synth = make_run(Strategy.SYNTHETIC, 1, values=[0.7] * 12)
        report = make_report(
            [real, synth], matrix(["real", "synthetic"], [1]), tmp_path
        )
        assert len(report.difference_series) == 1
        row = report.difference_series[0]
        assert row["strategy"] == "synthetic"
        assert row["diff"] == pytest.approx(-0.1, abs=1e-12)
        rendered = (tmp_path / DIFFERENCE_SERIES).read_text().splitlines()
        assert rendered[1].split("\t") == [
            "stub", "frozen", "synthetic", "P1", "0.700000", "0.800000", "-0.100000",
        ]

    def test_freeze_effect_is_frozen_minus_unfrozen(self, tmp_path):
        frozen = make_run(Strategy.REAL, 1, False, values=[0.8] * 12)
        unfrozen = make_run(Strategy.REAL, 1, True, values=[0.75] * 12)
        report = make_report(
            [frozen, unfrozen], matrix(["real"], [1], [False, True]), tmp_path
        )
        assert len(report.freeze_effect) == 1
        assert report.freeze_effect[0]["diff"] == pytest.approx(0.05, abs=1e-12)
        rendered = (tmp_path / FREEZE_EFFECT).read_text().splitlines()
        assert rendered[1].split("\t")[-1] == "0.050000"

    def test_single_freeze_flag_yields_no_freeze_rows(self, tmp_path):
        report = make_report(
            [make_run(Strategy.REAL, 1)], matrix(["real"], [1]), tmp_path
        )
        assert report.freeze_effect == []
        assert (tmp_path / FREEZE_EFFECT).read_text().splitlines()[1:] == []


class TestComparisons:
    def test_pooled_and_per_level_scopes(self, tmp_path):
        runs = [
            make_run(strategy, level)
            for strategy in (Strategy.REAL, Strategy.SYNTHETIC)
            for level in (1, 2)
        ]
        report = make_report(
            runs, matrix(["real", "synthetic"], [1, 2]), tmp_path
        )
        scopes = [row["scope"] for row in report.comparisons]
        assert scopes == ["pooled-P1-P2", "level-P1", "level-P2"]
        pooled = report.comparisons[0]["comparison"]
        assert pooled.n_pairs == len(SAMPLES) * len(STRUCTURE_NAMES) * 2
        assert pooled.levels == (1, 2)
        rendered = (tmp_path / COMPARISONS).read_text().splitlines()
        assert len(rendered) == 1 + 3
        assert rendered[1].split("\t")[4] == "pooled-P1-P2"

    def test_pooled_mean_diff_matches_hand_computation(self, tmp_path):
        real = make_run(Strategy.REAL, 1, values=[0.8] * 12)
        synth = make_run(Strategy.SYNTHETIC, 1, values=[0.73] * 12)
        report = make_report(
            [real, synth], matrix(["real", "synthetic"], [1]), tmp_path
        )
        pooled = report.comparisons[0]["comparison"]
        assert pooled.mean_diff == pytest.approx(-0.07, abs=1e-12)

    def test_level_zero_and_seven_not_pooled(self, tmp_path):
        runs = [make_run(s, 0) for s in (Strategy.REAL, Strategy.SYNTHETIC)]
        report = make_report(
            runs, matrix(["real", "synthetic"], [0]), tmp_path
        )
        scopes = [row["scope"] for row in report.comparisons]
        assert scopes == ["level-P0"]  # P0 sits outside the pooled band

    def test_no_comparisons_without_real_baseline(self, tmp_path):
        report = make_report(
            [make_run(Strategy.SYNTHETIC, 1)], matrix(["synthetic"], [1]), tmp_path
        )
        assert report.comparisons == []


class TestConvergenceSection:
    def test_ratio_pairs_and_summary(self, tmp_path):
        real = make_run(Strategy.REAL, 1, best_epoch=8)
        tuned = make_run(Strategy.SYNTH_PT_REAL_FT, 1, best_epoch=4)
        report = make_report(
            [real, tuned], matrix(["real", "synth-PT:real-FT"], [1]), tmp_path
        )
        entry = report.convergence["stub"]
        assert entry["pairs"][0]["ratio"] == pytest.approx(2.0)
        assert entry["pairs"][0]["real_best_epoch"] == 8
        assert entry["mean_ratio"] == pytest.approx(2.0)
        convergence_lines = (tmp_path / CONVERGENCE).read_text().splitlines()
        assert convergence_lines[1].split("\t") == [
            "stub", "frozen", "P1", "8", "4", "2.0000",
        ]
        summary = (tmp_path / CONVERGENCE_SUMMARY).read_text().splitlines()
        assert summary[1].split("\t") == ["stub", "2.0000", "1"]


class TestReportJson:
    def test_payload_structure_and_meta(self, tmp_path):
        run = make_run(Strategy.REAL, 1, values=[0.8] * 12)
        make_report(
            [run], matrix(["real"], [1]), tmp_path, meta={"config_hash": "deadbeef"}
        )
        payload = json.loads((tmp_path / REPORT_JSON).read_text())
        assert payload["_meta"] == {"config_hash": "deadbeef"}
        cell = payload["cells"][0]
        assert cell["model"] == "stub"
        assert cell["strategy"] == "real"
        assert cell["level"] == 1
        assert cell["encoders"] == "frozen"
        assert cell["mean"] == pytest.approx(0.8)
        assert cell["n"] == 12
        assert set(cell["per_structure"]) == set(STRUCTURE_NAMES)
        assert cell["best_epoch"] == 3

    def test_json_keys_sorted(self, tmp_path):
        make_run_ = make_run(Strategy.REAL, 1)
        make_report([make_run_], matrix(["real"], [1]), tmp_path)
        text = (tmp_path / REPORT_JSON).read_text()
        assert json.loads(text) == json.loads(
            json.dumps(json.loads(text), sort_keys=True)
        )
        assert text.index('"cells"') < text.index('"comparisons"')
