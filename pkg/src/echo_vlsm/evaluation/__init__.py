"""Evaluation: dice protocol, statistics, result collection, and reporting."""

from .evaluate import DiceResult, evaluate, read_results, write_results
from .metrics import EVAL_RESOLUTION, PROB_THRESHOLD, dice_at_512, dice_score
from .report import EvaluationReport, ReportRun, make_report, structural_na
from .stats import (
    ComparisonResult,
    WilcoxonResult,
    compare_strategies,
    convergence_ratio,
    wilcoxon_signed_rank,
)

__all__ = [
    "DiceResult",
    "evaluate",
    "read_results",
    "write_results",
    "EVAL_RESOLUTION",
    "PROB_THRESHOLD",
    "dice_at_512",
    "dice_score",
    "EvaluationReport",
    "ReportRun",
    "make_report",
    "structural_na",
    "ComparisonResult",
    "WilcoxonResult",
    "compare_strategies",
    "convergence_ratio",
    "wilcoxon_signed_rank",
]
