"""Frozen ResNet50 feature extraction shared by the classifier and SiFID."""
from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torchvision

from .errors import WeightsUnavailable
from .records import LesionPatch

# ImageNet checkpoint as cached by torchvision; used when present locally.
_IMAGENET_FILE = "resnet50-0676ba61.pth"
_INIT_SEED = 20240817

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def _cached_weights_path() -> Path:
    return Path(torch.hub.get_dir()) / "checkpoints" / _IMAGENET_FILE


def load_backbone(weights: str = "auto") -> nn.Module:
    """Frozen ResNet50 trunk (fc replaced by identity), always in eval mode.

    weights: "imagenet" requires the cached checkpoint file and raises
    WeightsUnavailable without it; "random" uses a fixed-seed random
    initialization; "auto" prefers the checkpoint and falls back to "random".
    """
    if weights not in ("auto", "imagenet", "random"):
        raise ValueError(f"unknown weights mode {weights!r}")
    path = _cached_weights_path()
    use_imagenet = path.is_file() and weights in ("auto", "imagenet")
    if weights == "imagenet" and not use_imagenet:
        raise WeightsUnavailable(f"no local ImageNet checkpoint at {path}")

    rng_state = torch.get_rng_state()
    try:
        torch.manual_seed(_INIT_SEED)
        model = torchvision.models.resnet50(weights=None)
    finally:
        torch.set_rng_state(rng_state)
    if use_imagenet:
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.fc = nn.Identity()
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model


def backbone_fingerprint(model: nn.Module) -> str:
    """SHA-256 over all parameters and buffers (bitwise freeze check)."""
    h = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def patches_to_tensor(
    patches: Sequence[LesionPatch], standardize: bool = False
) -> torch.Tensor:
    """(N, 3, 224, 224) float tensor; optional ImageNet-corpus standardization."""
    batch = torch.from_numpy(np.stack([p.chw() for p in patches]))
    if standardize:
        mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
        batch = (batch - mean) / std
    return batch


def pooled_features(
    backbone: nn.Module,
    patches: Sequence[LesionPatch],
    batch_size: int = 16,
    standardize: bool = False,
    cache: Optional[dict] = None,
) -> torch.Tensor:
    """2048-d globally pooled features for each patch, optionally memoized."""
    n = len(patches)
    out: list = [None] * n
    todo = []
    if cache is not None:
        for i, patch in enumerate(patches):
            hit = cache.get(patch.content_hash())
            if hit is not None:
                out[i] = hit
            else:
                todo.append(i)
    else:
        todo = list(range(n))
    with torch.no_grad():
        for start in range(0, len(todo), batch_size):
            idx = todo[start : start + batch_size]
            batch = patches_to_tensor([patches[i] for i in idx], standardize)
            feats = backbone(batch)
            for j, i in enumerate(idx):
                out[i] = feats[j]
                if cache is not None:
                    cache[patches[i].content_hash()] = feats[j]
    if n == 0:
        return torch.zeros((0, 2048))
    return torch.stack(out)


def early_feature_module(backbone: nn.Module) -> nn.Module:
    """First pooling-stage trunk (conv1 -> bn -> relu -> maxpool), 64 channels."""
    return nn.Sequential(backbone.conv1, backbone.bn1, backbone.relu, backbone.maxpool)
