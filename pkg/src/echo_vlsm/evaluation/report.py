"""Report assembly: Tables-2/3-style grids, Figs-2/3-style series, statistics.

Every artifact is rendered deterministically from persisted per-sample
results — no timestamps, fixed orderings, fixed float formatting — so
re-rendering from the same inputs is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ..errors import IncompleteMatrixError
from ..models.spec import ModelKind
from ..records import STRUCTURE_NAMES
from ..training.config import ExperimentConfig, Strategy, run_slug
from .evaluate import DiceResult

if TYPE_CHECKING:  # import cycle: training.loop uses evaluation.metrics
    from ..training.loop import TrainingHistory
from .stats import ComparisonResult, compare_strategies, convergence_ratio

POOLED_LEVELS = (1, 2, 3, 4, 5, 6)
ALL_LEVELS = (0, 1, 2, 3, 4, 5, 6, 7)

GRID_POOLED = "grid_pooled.tsv"
GRID_BY_STRUCTURE = "grid_by_structure.tsv"
DIFFERENCE_SERIES = "difference_series.tsv"
FREEZE_EFFECT = "freeze_effect.tsv"
CONVERGENCE = "convergence.tsv"
CONVERGENCE_SUMMARY = "convergence_summary.tsv"
COMPARISONS = "comparisons.tsv"
REPORT_JSON = "report.json"

_STRATEGY_ORDER = [Strategy.REAL, Strategy.SYNTHETIC, Strategy.SYNTH_PT_REAL_FT]


@dataclass
class ReportRun:
    """One completed run: its config, per-sample results, and history."""

    config: ExperimentConfig
    results: list[DiceResult]
    history: TrainingHistory | None = None

    @property
    def slug(self) -> str:
        return run_slug(self.config)


@dataclass
class EvaluationReport:
    cells: dict = field(default_factory=dict)
    comparisons: list = field(default_factory=list)
    convergence: dict = field(default_factory=dict)
    difference_series: list = field(default_factory=list)
    freeze_effect: list = field(default_factory=list)


def structural_na(strategy: Strategy, level: int) -> bool:
    """Cells the experiment design cannot populate (no synthetic P7 prompts)."""
    return strategy is Strategy.SYNTHETIC and level > 6


def _freeze_label(encoder_trainable: bool) -> str:
    return "unfrozen" if encoder_trainable else "frozen"


def _mean_std(values: list[float]) -> tuple[float, float]:
    array = np.asarray(values, dtype=np.float64)
    return float(array.mean()), float(array.std())


def make_report(
    runs: list[ReportRun],
    matrix: dict,
    out_dir: str | Path,
    *,
    meta: dict | None = None,
) -> EvaluationReport:
    """Build and render the full report; missing matrix cells are fatal.

    ``matrix`` holds the requested model_kinds, strategies, levels, and
    freeze_flags (encoder_trainable booleans).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    by_key: dict[tuple, ReportRun] = {}
    for run in runs:
        key = (
            run.config.model_kind,
            run.config.strategy,
            run.config.prompt_level,
            run.config.encoder_trainable,
        )
        if key in by_key:
            raise IncompleteMatrixError(
                f"duplicate runs for cell {_cell_name(*key)}: "
                f"{by_key[key].slug} and {run.slug}"
            )
        by_key[key] = run

    kinds = [ModelKind(k) for k in matrix["model_kinds"]]
    strategies = [
        s if isinstance(s, Strategy) else Strategy.from_string(s)
        for s in matrix["strategies"]
    ]
    strategies = sorted(strategies, key=_STRATEGY_ORDER.index)
    levels = sorted(matrix["levels"])
    freeze_flags = sorted(matrix["freeze_flags"])

    report = EvaluationReport()
    for kind in kinds:
        for strategy in strategies:
            for trainable in freeze_flags:
                for level in levels:
                    key = (kind, strategy, level, trainable)
                    if structural_na(strategy, level):
                        if key in by_key:
                            raise IncompleteMatrixError(
                                f"cell {_cell_name(*key)} must be N/A (synthetic "
                                f"prompts end at P6) but a run exists"
                            )
                        continue
                    run = by_key.get(key)
                    if run is None or not run.results:
                        raise IncompleteMatrixError(
                            f"missing results for cell {_cell_name(*key)}"
                        )
                    pooled_mean, pooled_std = _mean_std([r.dice for r in run.results])
                    per_structure = {}
                    for structure in STRUCTURE_NAMES:
                        values = [r.dice for r in run.results if r.structure == structure]
                        if values:
                            per_structure[structure] = _mean_std(values)
                    report.cells[key] = {
                        "slug": run.slug,
                        "mean": pooled_mean,
                        "std": pooled_std,
                        "n": len(run.results),
                        "per_structure": per_structure,
                        "best_epoch": run.history.best_epoch if run.history else None,
                    }

    _build_difference_series(report, kinds, strategies, levels, freeze_flags)
    _build_freeze_effect(report, kinds, strategies, levels, freeze_flags)
    _build_convergence(report, by_key, kinds, strategies, levels, freeze_flags)
    _build_comparisons(report, by_key, kinds, strategies, levels, freeze_flags)

    _render_grid_pooled(report, kinds, strategies, freeze_flags, levels, out_dir)
    _render_grid_by_structure(report, kinds, strategies, freeze_flags, levels, out_dir)
    _render_difference_series(report, out_dir)
    _render_freeze_effect(report, out_dir)
    _render_convergence(report, out_dir)
    _render_comparisons(report, out_dir)
    _render_json(report, out_dir, meta)
    return report


def _cell_name(kind, strategy, level, trainable) -> str:
    return (
        f"(model={kind.value}, strategy={strategy.value}, "
        f"level=P{level}, encoders={_freeze_label(trainable)})"
    )


def _build_difference_series(report, kinds, strategies, levels, freeze_flags) -> None:
    if Strategy.REAL not in strategies:
        return
    for kind in kinds:
        for trainable in freeze_flags:
            for strategy in strategies:
                if strategy is Strategy.REAL:
                    continue
                for level in levels:
                    if structural_na(strategy, level):
                        continue
                    cell = report.cells.get((kind, strategy, level, trainable))
                    real = report.cells.get((kind, Strategy.REAL, level, trainable))
                    if cell is None or real is None:
                        continue
                    report.difference_series.append({
                        "model": kind.value,
                        "encoders": _freeze_label(trainable),
                        "strategy": strategy.value,
                        "level": level,
                        "strategy_mean": cell["mean"],
                        "real_mean": real["mean"],
                        "diff": cell["mean"] - real["mean"],
                    })


def _build_freeze_effect(report, kinds, strategies, levels, freeze_flags) -> None:
    if not (True in freeze_flags and False in freeze_flags):
        return
    for kind in kinds:
        for strategy in strategies:
            for level in levels:
                if structural_na(strategy, level):
                    continue
                frozen = report.cells.get((kind, strategy, level, False))
                unfrozen = report.cells.get((kind, strategy, level, True))
                if frozen is None or unfrozen is None:
                    continue
                report.freeze_effect.append({
                    "model": kind.value,
                    "strategy": strategy.value,
                    "level": level,
                    "frozen_mean": frozen["mean"],
                    "unfrozen_mean": unfrozen["mean"],
                    "diff": frozen["mean"] - unfrozen["mean"],
                })


def _build_convergence(report, by_key, kinds, strategies, levels, freeze_flags) -> None:
    if Strategy.REAL not in strategies or Strategy.SYNTH_PT_REAL_FT not in strategies:
        return
    for kind in kinds:
        pairs = []
        for trainable in freeze_flags:
            for level in levels:
                real = by_key.get((kind, Strategy.REAL, level, trainable))
                tuned = by_key.get((kind, Strategy.SYNTH_PT_REAL_FT, level, trainable))
                if (
                    real is None or tuned is None
                    or real.history is None or tuned.history is None
                ):
                    continue
                ratio = convergence_ratio(real.history, tuned.history)
                pairs.append({
                    "encoders": _freeze_label(trainable),
                    "level": level,
                    "real_best_epoch": real.history.best_epoch,
                    "synth_pt_best_epoch": tuned.history.best_epoch,
                    "ratio": ratio,
                })
        if pairs:
            report.convergence[kind.value] = {
                "pairs": pairs,
                "mean_ratio": float(np.mean([p["ratio"] for p in pairs])),
            }


def _build_comparisons(report, by_key, kinds, strategies, levels, freeze_flags) -> None:
    if Strategy.REAL not in strategies:
        return
    for kind in kinds:
        for trainable in freeze_flags:
            for candidate in strategies:
                if candidate is Strategy.REAL:
                    continue
                real_results, real_levels = _pool_results(
                    by_key, kind, Strategy.REAL, levels, trainable
                )
                cand_results, cand_levels = _pool_results(
                    by_key, kind, candidate, levels, trainable
                )
                if not real_results or not cand_results:
                    continue
                common = sorted(set(real_levels) & set(cand_levels))
                pooled_levels = [lv for lv in common if lv in POOLED_LEVELS]
                label_base = {
                    "model": kind.value,
                    "encoders": _freeze_label(trainable),
                    "baseline": Strategy.REAL.value,
                    "candidate": candidate.value,
                }
                if pooled_levels:
                    result = compare_strategies(
                        real_results, cand_results,
                        baseline_id=f"{kind.value}:{Strategy.REAL.value}",
                        candidate_id=f"{kind.value}:{candidate.value}",
                        levels=pooled_levels,
                    )
                    report.comparisons.append({
                        **label_base,
                        "scope": "pooled-P%d-P%d" % (pooled_levels[0], pooled_levels[-1]),
                        "comparison": result,
                    })
                for level in common:
                    result = compare_strategies(
                        real_results, cand_results,
                        baseline_id=f"{kind.value}:{Strategy.REAL.value}:P{level}",
                        candidate_id=f"{kind.value}:{candidate.value}:P{level}",
                        levels=[level],
                    )
                    report.comparisons.append({
                        **label_base,
                        "scope": f"level-P{level}",
                        "comparison": result,
                    })


def _pool_results(by_key, kind, strategy, levels, trainable):
    pooled: list[DiceResult] = []
    present_levels: list[int] = []
    for level in levels:
        run = by_key.get((kind, strategy, level, trainable))
        if run is None:
            continue
        pooled.extend(run.results)
        present_levels.append(level)
    return pooled, present_levels


# -- rendering ------------------------------------------------------------


def _write_tsv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = ["\t".join(header)] + ["\t".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _format_cell(cell) -> str:
    return f"{cell['mean'] * 100:.2f} ± {cell['std'] * 100:.2f}"


def _render_grid_pooled(report, kinds, strategies, freeze_flags, levels, out_dir) -> None:
    header = ["model", "strategy", "encoders"] + [f"P{lv}" for lv in ALL_LEVELS]
    rows = []
    for kind in kinds:
        for trainable in sorted(freeze_flags, reverse=True):
            for strategy in strategies:
                row = [kind.value, strategy.value, _freeze_label(trainable)]
                for level in ALL_LEVELS:
                    if structural_na(strategy, level):
                        row.append("N/A")
                    elif level not in levels:
                        row.append("")
                    else:
                        row.append(_format_cell(report.cells[(kind, strategy, level, trainable)]))
                rows.append(row)
    _write_tsv(out_dir / GRID_POOLED, header, rows)


def _render_grid_by_structure(report, kinds, strategies, freeze_flags, levels, out_dir) -> None:
    header = ["model", "strategy", "encoders", "structure"] + [f"P{lv}" for lv in ALL_LEVELS]
    rows = []
    for kind in kinds:
        for trainable in sorted(freeze_flags, reverse=True):
            for strategy in strategies:
                for structure in STRUCTURE_NAMES:
                    row = [kind.value, strategy.value, _freeze_label(trainable), structure]
                    for level in ALL_LEVELS:
                        if structural_na(strategy, level):
                            row.append("N/A")
                        elif level not in levels:
                            row.append("")
                        else:
                            cell = report.cells[(kind, strategy, level, trainable)]
                            mean, std = cell["per_structure"][structure]
                            row.append(f"{mean * 100:.2f} ± {std * 100:.2f}")
                    rows.append(row)
    _write_tsv(out_dir / GRID_BY_STRUCTURE, header, rows)


def _render_difference_series(report, out_dir) -> None:
    header = ["model", "encoders", "strategy", "level", "strategy_mean", "real_mean", "diff"]
    rows = [
        [
            row["model"], row["encoders"], row["strategy"], f"P{row['level']}",
            f"{row['strategy_mean']:.6f}", f"{row['real_mean']:.6f}", f"{row['diff']:.6f}",
        ]
        for row in report.difference_series
    ]
    _write_tsv(out_dir / DIFFERENCE_SERIES, header, rows)


def _render_freeze_effect(report, out_dir) -> None:
    header = ["model", "strategy", "level", "frozen_mean", "unfrozen_mean", "diff"]
    rows = [
        [
            row["model"], row["strategy"], f"P{row['level']}",
            f"{row['frozen_mean']:.6f}", f"{row['unfrozen_mean']:.6f}", f"{row['diff']:.6f}",
        ]
        for row in report.freeze_effect
    ]
    _write_tsv(out_dir / FREEZE_EFFECT, header, rows)


def _render_convergence(report, out_dir) -> None:
    header = [
        "model", "encoders", "level",
        "real_best_epoch", "synth_pt_best_epoch", "ratio",
    ]
    rows = []
    summary_rows = []
    for model in sorted(report.convergence):
        entry = report.convergence[model]
        for pair in entry["pairs"]:
            rows.append([
                model, pair["encoders"], f"P{pair['level']}",
                str(pair["real_best_epoch"]), str(pair["synth_pt_best_epoch"]),
                f"{pair['ratio']:.4f}",
            ])
        summary_rows.append([model, f"{entry['mean_ratio']:.4f}", str(len(entry["pairs"]))])
    _write_tsv(out_dir / CONVERGENCE, header, rows)
    _write_tsv(out_dir / CONVERGENCE_SUMMARY, ["model", "mean_ratio", "n_pairs"], summary_rows)


def _render_comparisons(report, out_dir) -> None:
    header = [
        "model", "encoders", "baseline", "candidate", "scope",
        "n_pairs", "mean_diff", "statistic", "p_value", "method",
    ]
    rows = []
    for row in report.comparisons:
        comparison: ComparisonResult = row["comparison"]
        rows.append([
            row["model"], row["encoders"], row["baseline"], row["candidate"], row["scope"],
            str(comparison.n_pairs),
            f"{comparison.mean_diff:.6f}",
            f"{comparison.wilcoxon.statistic:.1f}",
            f"{comparison.wilcoxon.p_value:.6g}",
            comparison.wilcoxon.method,
        ])
    _write_tsv(out_dir / COMPARISONS, header, rows)


def _render_json(report, out_dir, meta) -> None:
    payload = {
        "cells": [
            {
                "model": kind.value,
                "strategy": strategy.value,
                "level": level,
                "encoders": _freeze_label(trainable),
                **{
                    k: v for k, v in cell.items() if k != "per_structure"
                },
                "per_structure": {
                    name: {"mean": mean, "std": std}
                    for name, (mean, std) in cell["per_structure"].items()
                },
            }
            for (kind, strategy, level, trainable), cell in sorted(
                report.cells.items(),
                key=lambda item: (
                    item[0][0].value, item[0][1].value, item[0][2], item[0][3]
                ),
            )
        ],
        "difference_series": report.difference_series,
        "freeze_effect": report.freeze_effect,
        "convergence": report.convergence,
        "comparisons": [
            {
                "model": row["model"],
                "encoders": row["encoders"],
                "baseline": row["baseline"],
                "candidate": row["candidate"],
                "scope": row["scope"],
                "n_pairs": row["comparison"].n_pairs,
                "mean_diff": row["comparison"].mean_diff,
                "statistic": row["comparison"].wilcoxon.statistic,
                "p_value": row["comparison"].wilcoxon.p_value,
                "method": row["comparison"].wilcoxon.method,
                "levels": list(row["comparison"].levels),
                "pairing_key": row["comparison"].pairing_key,
            }
            for row in report.comparisons
        ],
    }
    if meta is not None:
        payload["_meta"] = meta
    (out_dir / REPORT_JSON).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
