"""Multi-scale image pyramid construction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ImageTooSmall
from ..patches import resize_bilinear


@dataclass
class ScalePyramid:
    """Image pyramid ordered coarsest -> finest; images[-1] is the training image."""

    images: list = field(default_factory=list)
    scale_factor: float = 0.8  # effective per-level factor after step rounding
    min_dim: int = 25
    max_dim: int = 250

    def __len__(self) -> int:
        return len(self.images)

    @property
    def finest(self) -> np.ndarray:
        return self.images[-1]

    @property
    def coarsest(self) -> np.ndarray:
        return self.images[0]

    def shapes(self) -> list[tuple[int, int]]:
        return [img.shape for img in self.images]


def num_downscale_steps(finest_min_dim: int, min_dim: int, r: float) -> int:
    """ceil(log(min_dim / finest_min_dim) / log(r)), never negative."""
    if finest_min_dim <= min_dim:
        return 0
    return max(0, math.ceil(math.log(min_dim / finest_min_dim) / math.log(r)))


def build_pyramid(
    image: np.ndarray, r: float = 0.8, min_dim: int = 25, max_dim: int = 250
) -> ScalePyramid:
    """Downscale by ~(1-r) per level until the smaller dimension reaches min_dim.

    Inputs larger than max_dim are first capped so the larger dimension equals
    max_dim. The nominal factor r fixes the number of levels; the effective
    factor is then adjusted so the coarsest level lands exactly on min_dim.
    """
    if not (0.0 < r < 1.0):
        raise ValueError("scale factor must lie in (0, 1)")
    image = np.asarray(image, dtype=np.float32)
    if min(image.shape) < min_dim:
        raise ImageTooSmall(f"image {image.shape} smaller than min_dim={min_dim}")
    if max(image.shape) > max_dim:
        cap = max_dim / max(image.shape)
        target = (max(1, round(image.shape[0] * cap)), max(1, round(image.shape[1] * cap)))
        image = resize_bilinear(image, target)
        if min(image.shape) < min_dim:
            raise ImageTooSmall(
                f"image shape {image.shape} after max_dim cap is below min_dim={min_dim}"
            )

    finest_min = min(image.shape)
    steps = num_downscale_steps(finest_min, min_dim, r)
    if steps == 0:
        return ScalePyramid(images=[image], scale_factor=r, min_dim=min_dim, max_dim=max_dim)

    r_eff = (min_dim / finest_min) ** (1.0 / steps)
    images = []
    for level in range(steps, -1, -1):  # coarsest first
        scale = r_eff**level
        shape = (max(1, round(image.shape[0] * scale)), max(1, round(image.shape[1] * scale)))
        images.append(image if level == 0 else resize_bilinear(image, shape))
    return ScalePyramid(images=images, scale_factor=r_eff, min_dim=min_dim, max_dim=max_dim)
