"""Deterministic inference-time preprocessing; no augmentation anywhere."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ModelError
from .spec import ModelSpec


def to_unit_range(image: np.ndarray) -> np.ndarray:
    """Map an intensity array onto float32 [0, 1].

    Integer arrays divide by their dtype's maximum (so 0 stays 0); float
    arrays already within [0, 1] pass through; other float arrays are min-max
    scaled (a constant array maps to zeros).
    """
    image = np.asarray(image)
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        if info.min < 0:
            raise ModelError(f"signed integer images unsupported, got {image.dtype}")
        return image.astype(np.float32) / float(info.max)
    image = image.astype(np.float32)
    lo, hi = float(image.min()), float(image.max())
    if lo >= 0.0 and hi <= 1.0:
        return image
    if hi > lo:
        return (image - lo) / (hi - lo)
    return np.zeros_like(image)


def resize_intensity(image: np.ndarray | torch.Tensor, size: int) -> torch.Tensor:
    """Bilinear resize of a 2-D array to (size, size), align_corners=False."""
    if size <= 0:
        raise ModelError(f"target size must be positive, got {size}")
    tensor = torch.as_tensor(np.asarray(image), dtype=torch.float32)
    if tensor.ndim != 2:
        raise ModelError(f"expected a 2-D intensity array, got shape {tuple(tensor.shape)}")
    if tensor.shape[0] <= 0 or tensor.shape[1] <= 0:
        raise ModelError(f"image dimensions must be positive, got {tuple(tensor.shape)}")
    if tuple(tensor.shape) == (size, size):
        return tensor
    resized = F.interpolate(
        tensor[None, None], size=(size, size), mode="bilinear", align_corners=False
    )
    return resized[0, 0]


def preprocess(image: np.ndarray, spec: ModelSpec) -> torch.Tensor:
    """2-D intensity array -> normalized (3, S, S) float32 tensor."""
    if spec.normalization is None:
        raise ModelError(
            f"{spec.kind.value}: normalization constants not loaded; "
            "build the handle first (they ship with the model family)"
        )
    unit = to_unit_range(image)
    resized = resize_intensity(unit, spec.input_size)
    mean, std = spec.normalization
    mean_t = torch.tensor(mean, dtype=torch.float32).view(3, 1, 1)
    std_t = torch.tensor(std, dtype=torch.float32).view(3, 1, 1)
    return (resized[None].expand(3, -1, -1) - mean_t) / std_t
