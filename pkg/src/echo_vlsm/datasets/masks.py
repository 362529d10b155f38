"""Binary-mask derivation from the multiclass ground truth."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..records import SegmentationTarget


def check_label_values(mask: np.ndarray, targets: tuple[SegmentationTarget, ...]) -> None:
    """Reject masks with values outside {0} plus the known labels."""
    allowed = {0} | {t.label_value for t in targets}
    present = set(np.unique(mask).tolist())
    offending = sorted(present - allowed)
    if offending:
        raise DataError(
            f"mask contains values outside the known label set {sorted(allowed)}: {offending}"
        )


def binarize_mask(
    mask: np.ndarray,
    target: SegmentationTarget,
    targets: tuple[SegmentationTarget, ...] | None = None,
) -> np.ndarray:
    """Indicator of ``target.label_value`` in ``mask``, same shape, uint8.

    When ``targets`` is given the full label universe is validated first;
    otherwise only the requested target needs to be a known convention.
    """
    if targets is not None:
        check_label_values(mask, targets)
    return (mask == target.label_value).astype(np.uint8)


def background_mask(mask: np.ndarray) -> np.ndarray:
    return (mask == 0).astype(np.uint8)


def partition_residual(mask: np.ndarray, targets: tuple[SegmentationTarget, ...]) -> np.ndarray:
    """Sum of all target indicators plus background minus ones.

    Zero everywhere iff the targets and background partition every pixel.
    """
    total = background_mask(mask).astype(np.int64)
    for target in targets:
        total += binarize_mask(mask, target)
    return total - 1
