"""Triplet entries -> model-ready tensors, with deterministic batching."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..datasets.readers import load_image, load_mask
from ..errors import TrainingError
from ..models.preprocess import preprocess
from ..models.spec import ModelSpec
from ..prompts.triplets import TripletEntry


def resize_mask_nearest(mask: np.ndarray | torch.Tensor, size: int) -> torch.Tensor:
    """Nearest-neighbour resize of a binary/label mask to (size, size)."""
    tensor = torch.as_tensor(np.asarray(mask), dtype=torch.float32)
    if tensor.ndim != 2:
        raise TrainingError(f"expected a 2-D mask, got shape {tuple(tensor.shape)}")
    if tuple(tensor.shape) == (size, size):
        return tensor
    return F.interpolate(tensor[None, None], size=(size, size), mode="nearest")[0, 0]


class TripletTensorDataset:
    """Loads (image, binary target, prompt) tensors for a list of entries."""

    def __init__(self, entries: list[TripletEntry], spec: ModelSpec):
        if not entries:
            raise TrainingError("cannot build a dataset over zero triplet entries")
        self.entries = list(entries)
        self.spec = spec

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, torch.Tensor, str]:
        entry = self.entries[index]
        image = preprocess(load_image(entry.image_ref), self.spec)
        target = resize_mask_nearest(load_mask(entry.mask_ref), self.spec.input_size)
        return image, target[None], entry.prompt

    def load_gt_mask(self, index: int) -> np.ndarray:
        """The entry's binary mask at its native resolution."""
        return np.asarray(load_mask(self.entries[index].mask_ref))

    def batch(self, indices: list[int]) -> tuple[torch.Tensor, torch.Tensor, list[str]]:
        images, targets, prompts = [], [], []
        for index in indices:
            image, target, prompt = self[index]
            images.append(image)
            targets.append(target)
            prompts.append(prompt)
        return torch.stack(images), torch.stack(targets), prompts

    def iter_batches(self, batch_size: int, order: np.ndarray | list[int]):
        order = list(order)
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            yield chunk, self.batch(chunk)

    def touched_keys(self) -> set[tuple[str, str]]:
        return {(entry.sample_key, entry.source.value) for entry in self.entries}
