"""Soft dice + BCE training losses, computed in probability space.

Conventions: smoothing epsilon 1e-6 in the dice term; probabilities clamped
to [1e-7, 1 - 1e-7] before the BCE log so perfect predictions stay finite.
Arrays with three or more dimensions are treated as batches over their first
axis — dice is computed per sample and averaged, matching per-image dice.
"""

from __future__ import annotations

import numpy as np
import torch

from ..errors import TrainingError

DICE_EPSILON = 1e-6
BCE_CLAMP = 1e-7


def _as_pair(probs, targets) -> tuple[torch.Tensor, torch.Tensor]:
    probs = probs if isinstance(probs, torch.Tensor) else torch.as_tensor(
        np.asarray(probs), dtype=torch.float32
    )
    targets = targets if isinstance(targets, torch.Tensor) else torch.as_tensor(
        np.asarray(targets), dtype=torch.float32
    )
    targets = targets.to(dtype=probs.dtype)
    if probs.shape != targets.shape:
        raise TrainingError(
            f"probability map shape {tuple(probs.shape)} does not match "
            f"target shape {tuple(targets.shape)}"
        )
    return probs, targets


def soft_dice_loss(probs, targets, epsilon: float = DICE_EPSILON) -> torch.Tensor:
    """1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps), per sample, averaged."""
    probs, targets = _as_pair(probs, targets)
    if probs.ndim <= 2:
        flat_p = probs.reshape(1, -1)
        flat_t = targets.reshape(1, -1)
    else:
        flat_p = probs.reshape(probs.shape[0], -1)
        flat_t = targets.reshape(targets.shape[0], -1)
    intersection = (flat_p * flat_t).sum(dim=1)
    denominator = flat_p.sum(dim=1) + flat_t.sum(dim=1)
    dice = (2.0 * intersection + epsilon) / (denominator + epsilon)
    return (1.0 - dice).mean()


def bce_loss(probs, targets, clamp: float = BCE_CLAMP) -> torch.Tensor:
    """Mean binary cross-entropy over all pixels, with clamped probabilities."""
    probs, targets = _as_pair(probs, targets)
    probs = probs.clamp(clamp, 1.0 - clamp)
    return -(targets * probs.log() + (1.0 - targets) * (1.0 - probs).log()).mean()


def combined_loss(
    probs,
    targets,
    dice_weight: float = 1.0,
    bce_weight: float = 0.2,
) -> torch.Tensor:
    """dice_weight * soft dice + bce_weight * BCE."""
    total = dice_weight * soft_dice_loss(probs, targets)
    if bce_weight != 0.0:
        total = total + bce_weight * bce_loss(probs, targets)
    return total
