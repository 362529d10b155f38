"""The dice evaluation protocol: 512x512, threshold 0.5, empty-empty = 1."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import EvaluationError

EVAL_RESOLUTION = 512
PROB_THRESHOLD = 0.5


def dice_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P∩G| / (|P|+|G|) over binary arrays; both empty -> 1.0."""
    pred = np.asarray(pred) > 0
    gt = np.asarray(gt) > 0
    if pred.shape != gt.shape:
        raise EvaluationError(
            f"prediction shape {pred.shape} does not match ground truth {gt.shape}"
        )
    pred_sum = int(pred.sum())
    gt_sum = int(gt.sum())
    if pred_sum + gt_sum == 0:
        return 1.0
    intersection = int(np.logical_and(pred, gt).sum())
    return 2.0 * intersection / (pred_sum + gt_sum)


def dice_at_512(
    prob_map: np.ndarray | torch.Tensor,
    gt_mask: np.ndarray,
    *,
    resolution: int = EVAL_RESOLUTION,
    threshold: float = PROB_THRESHOLD,
) -> float:
    """Protocol dice: probabilities bilinear->512, threshold 0.5; GT nearest->512."""
    probs = torch.as_tensor(np.asarray(prob_map), dtype=torch.float32)
    if probs.ndim != 2:
        raise EvaluationError(f"probability map must be 2-D, got shape {tuple(probs.shape)}")
    if tuple(probs.shape) != (resolution, resolution):
        probs = F.interpolate(
            probs[None, None], size=(resolution, resolution),
            mode="bilinear", align_corners=False,
        )[0, 0]
    gt = np.asarray(gt_mask)
    if gt.ndim != 2:
        raise EvaluationError(f"ground-truth mask must be 2-D, got shape {gt.shape}")
    gt_t = torch.as_tensor((gt > 0).astype(np.float32))
    if tuple(gt_t.shape) != (resolution, resolution):
        gt_t = F.interpolate(
            gt_t[None, None], size=(resolution, resolution), mode="nearest"
        )[0, 0]
    pred_binary = (probs >= threshold).numpy()
    return dice_score(pred_binary, gt_t.numpy() > 0)
