"""A few-thousand-parameter VLSM stub honoring the full handle contract.

Text goes through a bag-of-characters histogram (64 bins over ord % 64) and a
linear projection; the image through two strided convolutions; the decoder
FiLM-conditions the image features on the text embedding and upsamples back
to the input resolution, emitting one logit map.  Deterministic to build
(seeded) and to run (no dropout, full precision).
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

TEXT_BINS = 64


def char_bag(prompt: str, bins: int = TEXT_BINS) -> np.ndarray:
    """Length-normalized histogram of character codes; empty prompt -> zeros."""
    histogram = np.zeros(bins, dtype=np.float32)
    for char in prompt:
        histogram[ord(char) % bins] += 1.0
    if prompt:
        histogram /= len(prompt)
    return histogram


class CharBagTextEncoder(nn.Module):
    def __init__(self, embed_dim: int):
        super().__init__()
        self.projection = nn.Linear(TEXT_BINS, embed_dim)

    def forward(self, prompts: list[str]) -> torch.Tensor:
        bags = np.stack([char_bag(p) for p in prompts])
        device = self.projection.weight.device
        return self.projection(torch.from_numpy(bags).to(device))


class TinyImageEncoder(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(3, width, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(width, 2 * width, 3, stride=2, padding=1)
        self.act = nn.ReLU()

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.act(self.conv2(self.act(self.conv1(images))))


class FilmDecoder(nn.Module):
    """Text-conditioned decoder: per-channel scale/shift, then upsampling."""

    def __init__(self, width: int, embed_dim: int):
        super().__init__()
        channels = 2 * width
        self.film = nn.Linear(embed_dim, 2 * channels)
        self.up1 = nn.ConvTranspose2d(channels, width, 4, stride=2, padding=1)
        self.up2 = nn.ConvTranspose2d(width, 1, 4, stride=2, padding=1)
        self.act = nn.ReLU()

    def forward(self, features: torch.Tensor, text_embedding: torch.Tensor) -> torch.Tensor:
        scale, shift = self.film(text_embedding).chunk(2, dim=-1)
        features = features * (1 + scale[:, :, None, None]) + shift[:, :, None, None]
        return self.up2(self.act(self.up1(self.act(features))))


class VlsmStub(nn.Module):
    """(image batch, prompt list) -> logit maps at the input resolution."""

    def __init__(self, input_size: int = 64, width: int = 8, embed_dim: int = 16):
        super().__init__()
        if input_size % 4 != 0:
            raise ValueError(f"stub input size must be divisible by 4, got {input_size}")
        self.input_size = input_size
        self.width = width
        self.embed_dim = embed_dim
        self.text_encoder = CharBagTextEncoder(embed_dim)
        self.image_encoder = TinyImageEncoder(width)
        self.decoder = FilmDecoder(width, embed_dim)

    def forward(self, images: torch.Tensor, prompts: list[str]) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
        if images.shape[0] != len(prompts):
            raise ValueError(
                f"batch size {images.shape[0]} does not match {len(prompts)} prompts"
            )
        return self.decoder(self.image_encoder(images), self.text_encoder(prompts))


def build_stub(input_size: int = 64, width: int = 8, embed_dim: int = 16, seed: int = 0) -> VlsmStub:
    """Construct a stub with seed-determined initial weights."""
    generator_state = torch.get_rng_state()
    torch.manual_seed(seed)
    try:
        return VlsmStub(input_size=input_size, width=width, embed_dim=embed_dim)
    finally:
        torch.set_rng_state(generator_state)
