"""Green bounding-box rendering for VQA shape queries.

The box is the tight axis-aligned bounding rectangle of the mask foreground,
drawn as a pure-green stroke growing inward from the rectangle border, so no
pixel strictly outside (or strictly inside, beyond the stroke) is touched.
"""

from __future__ import annotations

import numpy as np

from ..errors import VqaError

GREEN = (0, 255, 0)
STROKE_WIDTH = 2


def mask_bounding_box(mask: np.ndarray) -> tuple[int, int, int, int]:
    """Tight (row_min, col_min, row_max, col_max), inclusive, of mask > 0."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise VqaError(f"mask must be 2-D, got shape {mask.shape}")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise VqaError("empty mask: no bounding box derivable")
    return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])


def to_uint8_rgb(image: np.ndarray) -> np.ndarray:
    """Copy ``image`` into an (H, W, 3) uint8 array.

    uint8 input is taken verbatim; other dtypes are min-max scaled to 0..255
    (a constant image maps to zeros).
    """
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 3:
        channels = image
    elif image.ndim == 2:
        channels = np.stack([image] * 3, axis=-1)
    else:
        raise VqaError(f"expected a 2-D or (H, W, 3) image, got shape {image.shape}")
    if channels.dtype == np.uint8:
        return channels.copy()
    channels = channels.astype(np.float64)
    lo, hi = channels.min(), channels.max()
    if hi > lo:
        channels = (channels - lo) / (hi - lo) * 255.0
    else:
        channels = np.zeros_like(channels)
    return np.round(channels).astype(np.uint8)


def draw_green_box(
    image: np.ndarray, binary_mask: np.ndarray, stroke_width: int = STROKE_WIDTH
) -> np.ndarray:
    """Render the mask's bounding rectangle in pure green on an RGB copy."""
    if stroke_width < 1:
        raise VqaError(f"stroke width must be >= 1, got {stroke_width}")
    rgb = to_uint8_rgb(image)
    mask = np.asarray(binary_mask)
    if mask.shape != rgb.shape[:2]:
        raise VqaError(
            f"mask shape {mask.shape} does not match image shape {rgb.shape[:2]}"
        )
    rmin, cmin, rmax, cmax = mask_bounding_box(mask)
    color = np.array(GREEN, dtype=np.uint8)
    top = min(rmin + stroke_width - 1, rmax)
    bottom = max(rmax - stroke_width + 1, rmin)
    left = min(cmin + stroke_width - 1, cmax)
    right = max(cmax - stroke_width + 1, cmin)
    rgb[rmin : top + 1, cmin : cmax + 1] = color
    rgb[bottom : rmax + 1, cmin : cmax + 1] = color
    rgb[rmin : rmax + 1, cmin : left + 1] = color
    rgb[rmin : rmax + 1, right : cmax + 1] = color
    return rgb
