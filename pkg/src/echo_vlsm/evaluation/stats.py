"""Paired statistics: Wilcoxon signed-rank, strategy comparison, convergence.

The Wilcoxon implementation keeps both branches explicit: an exact
subset-sum enumeration of the conditional null for n <= 25 pairs, and a
tie-robust normal approximation with continuity correction above.  Zero
differences are dropped (classic Wilcoxon) by default; the Pratt variant
ranks them first and then drops their ranks from the sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from ..errors import EvaluationError
from .evaluate import DiceResult

EXACT_BRANCH_MAX_N = 25

PAIRING_KEY = "(sample_key, structure, level)"


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    p_value: float
    n_used: int  # nonzero differences contributing to the sums
    method: str  # "exact" | "normal" | "degenerate"
    w_plus: float
    w_minus: float


def wilcoxon_signed_rank(
    diffs, *, zero_method: str = "wilcox", exact_max_n: int = EXACT_BRANCH_MAX_N
) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test over paired differences."""
    diffs = np.asarray(diffs, dtype=np.float64).ravel()
    if diffs.size == 0:
        raise EvaluationError("Wilcoxon test needs at least one pair")
    if zero_method not in ("wilcox", "pratt"):
        raise EvaluationError(f"unknown zero method {zero_method!r}")

    if zero_method == "wilcox":
        nonzero = diffs[diffs != 0.0]
        ranks = rankdata(np.abs(nonzero)) if nonzero.size else np.array([])
        signs = np.sign(nonzero)
    else:  # pratt: zeros join the ranking, then their ranks are discarded
        ranks_all = rankdata(np.abs(diffs))
        keep = diffs != 0.0
        ranks = ranks_all[keep]
        signs = np.sign(diffs[keep])

    n_used = int(ranks.size)
    if n_used == 0:
        return WilcoxonResult(
            statistic=0.0, p_value=1.0, n_used=0, method="degenerate",
            w_plus=0.0, w_minus=0.0,
        )

    w_plus = float(ranks[signs > 0].sum())
    w_minus = float(ranks[signs < 0].sum())
    statistic = min(w_plus, w_minus)

    if n_used <= exact_max_n:
        p_value = _exact_two_sided_p(ranks, w_plus)
        method = "exact"
    else:
        p_value = _normal_two_sided_p(ranks, w_plus)
        method = "normal"
    p_value = min(1.0, max(p_value, np.finfo(np.float64).tiny))
    return WilcoxonResult(
        statistic=statistic, p_value=p_value, n_used=n_used, method=method,
        w_plus=w_plus, w_minus=w_minus,
    )


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Exact conditional null: each rank enters W+ with probability 1/2.

    Average ranks can be half-integers, so the subset-sum runs over doubled
    ranks (always integers); counts stay exact in float64 well past n = 25.
    """
    doubled = np.round(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for rank in doubled:
        shifted = np.zeros_like(counts)
        shifted[rank:] = counts[: counts.size - rank]
        counts = counts + shifted
    target = int(round(2.0 * w_plus))
    n_assignments = 2.0 ** len(doubled)
    p_le = counts[: target + 1].sum() / n_assignments
    p_ge = counts[target:].sum() / n_assignments
    return min(1.0, 2.0 * min(p_le, p_ge))


def _normal_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Normal approximation with continuity correction.

    Under the null, W+ has mean sum(r)/2 and variance sum(r^2)/4; expressing
    the moments through the realized ranks makes tie (and Pratt) corrections
    automatic.
    """
    mu = float(ranks.sum()) / 2.0
    sigma = float(np.sqrt((ranks**2).sum() / 4.0))
    if sigma == 0.0:
        return 1.0
    z = (abs(w_plus - mu) - 0.5) / sigma
    return float(2.0 * norm.sf(max(z, 0.0)))


@dataclass(frozen=True)
class ComparisonResult:
    """Candidate-vs-baseline paired comparison (positive favors the candidate)."""

    baseline_id: str
    candidate_id: str
    n_pairs: int
    mean_diff: float
    wilcoxon: WilcoxonResult
    pairing_key: str
    levels: tuple[int, ...]


def compare_strategies(
    baseline_results: list[DiceResult],
    candidate_results: list[DiceResult],
    *,
    baseline_id: str = "baseline",
    candidate_id: str = "candidate",
    levels: list[int] | None = None,
    zero_method: str = "wilcox",
) -> ComparisonResult:
    """Pair by (sample_key, structure, level) and test candidate - baseline."""

    def index(results: list[DiceResult], label: str) -> dict:
        table: dict[tuple[str, str, int], float] = {}
        for result in results:
            if levels is not None and result.level not in levels:
                continue
            key = (result.sample_key, result.structure, result.level)
            if key in table:
                raise EvaluationError(f"{label}: duplicate result for pair key {key}")
            table[key] = result.dice
        return table

    baseline = index(baseline_results, baseline_id)
    candidate = index(candidate_results, candidate_id)
    if not baseline or not candidate:
        raise EvaluationError(
            f"no results to compare between {baseline_id!r} and {candidate_id!r}"
            + (f" at levels {sorted(levels)}" if levels is not None else "")
        )
    unmatched = sorted(set(baseline) ^ set(candidate))
    if unmatched:
        shown = ", ".join(map(str, unmatched[:5]))
        raise EvaluationError(
            f"{len(unmatched)} unpairable sample(s) between {baseline_id!r} "
            f"and {candidate_id!r}: {shown}"
            + (" ..." if len(unmatched) > 5 else "")
        )
    keys = sorted(baseline)
    diffs = np.array([candidate[key] - baseline[key] for key in keys])
    used_levels = tuple(sorted({key[2] for key in keys}))
    return ComparisonResult(
        baseline_id=baseline_id,
        candidate_id=candidate_id,
        n_pairs=len(keys),
        mean_diff=float(diffs.mean()),
        wilcoxon=wilcoxon_signed_rank(diffs, zero_method=zero_method),
        pairing_key=PAIRING_KEY,
        levels=used_levels,
    )


def convergence_ratio(history_a, history_b) -> float:
    """best_epoch(A) / best_epoch(B), both 1-indexed first-best epochs."""
    for history in (history_a, history_b):
        if not getattr(history, "epochs", None):
            raise EvaluationError("convergence ratio needs nonempty histories")
    return history_a.best_epoch / history_b.best_epoch
