"""Per-scale residual generator and patch critic networks."""
from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ShapeError


class ConvBlock(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.LeakyReLU(0.2, inplace=True),
        )


def channels_for_level(level: int, base_channels: int = 32, cap: int = 128) -> int:
    """Channel width for a pyramid level (0 = coarsest), doubled every 4 levels."""
    return min(base_channels * 2 ** (level // 4), cap)


class ResidualGenerator(nn.Module):
    """5-block ConvNet producing a residual image; output in (-1, 1) via tanh."""

    def __init__(self, channels: int = 32, blocks: int = 5):
        super().__init__()
        layers = [ConvBlock(1, channels)]
        for _ in range(blocks - 2):
            layers.append(ConvBlock(channels, channels))
        layers.append(nn.Conv2d(channels, 1, kernel_size=3, padding=1))
        self.body = nn.Sequential(*layers)
        self.tail = nn.Tanh()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.tail(self.body(x))


class PatchCritic(nn.Module):
    """Matching-capacity convolutional critic; spatial score map output."""

    def __init__(self, channels: int = 32, blocks: int = 5):
        super().__init__()
        layers = [ConvBlock(1, channels)]
        for _ in range(blocks - 2):
            layers.append(ConvBlock(channels, channels))
        layers.append(nn.Conv2d(channels, 1, kernel_size=3, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def generator_forward(scale, noise: torch.Tensor, prev_up: torch.Tensor) -> torch.Tensor:
    """Residual map: prev_up + ConvNet(sigma * noise + prev_up)."""
    if noise.shape != prev_up.shape:
        raise ShapeError(f"noise {tuple(noise.shape)} vs prev {tuple(prev_up.shape)}")
    return prev_up + scale.generator(scale.sigma * noise + prev_up)
