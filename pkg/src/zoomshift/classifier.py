"""Three-class patch classifier: frozen backbone + trainable linear head."""
from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .backbone import backbone_fingerprint, load_backbone, pooled_features
from .errors import ShapeError, TrainingDiverged
from .records import CLASS_ORDER, ClassLabel, LesionPatch

FEATURE_DIM = 2048
CHECKPOINT_SCHEMA = "classifier-checkpoint-1"


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-2
    lr_step: int = 5
    lr_gamma: float = 0.1
    betas: tuple = (0.9, 0.999)
    # corpus-mean input standardization, off by default
    standardize_inputs: bool = False


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    return config.lr * config.lr_gamma ** (epoch // config.lr_step)


def select_best_epoch(val_losses: Sequence[float]) -> int:
    """Index of the minimum validation loss; ties break toward the earlier epoch."""
    return int(np.argmin(val_losses))


class ClassifierModel:
    """Frozen pretrained trunk with a trainable affine head over pooled features.

    Train-set feature standardization is folded into the scoring path as fixed
    (non-trainable) statistics, so scores remain an affine-plus-sigmoid map of
    the raw 2048-d features.
    """

    def __init__(self, backbone: nn.Module, num_classes: int = 3, head_seed: int = 0):
        self.backbone = backbone
        self.class_order = tuple(CLASS_ORDER[:num_classes])
        rng_state = torch.get_rng_state()
        try:
            torch.manual_seed(head_seed)
            self.head = nn.Linear(FEATURE_DIM, num_classes)
            nn.init.normal_(self.head.weight, 0.0, 0.01)
            nn.init.zeros_(self.head.bias)
        finally:
            torch.set_rng_state(rng_state)
        self.feature_mean = torch.zeros(FEATURE_DIM)
        self.feature_std = torch.ones(FEATURE_DIM)
        self.standardize_inputs = False

    @property
    def num_classes(self) -> int:
        return self.head.out_features

    def trainable_parameter_count(self) -> int:
        return sum(p.numel() for p in self.head.parameters() if p.requires_grad)

    def backbone_hash(self) -> str:
        return backbone_fingerprint(self.backbone)

    def features(self, patches: Sequence[LesionPatch], cache: Optional[dict] = None) -> torch.Tensor:
        return pooled_features(
            self.backbone, patches, standardize=self.standardize_inputs, cache=cache
        )

    def logits_from_features(self, features: torch.Tensor) -> torch.Tensor:
        if features.ndim != 2 or features.shape[1] != FEATURE_DIM:
            raise ShapeError(f"expected (N, {FEATURE_DIM}) features, got {tuple(features.shape)}")
        normed = (features - self.feature_mean) / self.feature_std
        return self.head(normed)

    def head_affine(self) -> tuple[np.ndarray, np.ndarray]:
        """(weights, bias) of the equivalent affine map over raw features."""
        w = self.head.weight.detach().numpy()
        b = self.head.bias.detach().numpy()
        std = self.feature_std.numpy()
        mean = self.feature_mean.numpy()
        w_raw = w / std[None, :]
        b_raw = b - (w / std[None, :]) @ mean
        return w_raw, b_raw


def build_classifier(
    num_classes: int = 3,
    weights: str = "auto",
    backbone: Optional[nn.Module] = None,
    head_seed: int = 0,
) -> ClassifierModel:
    """Frozen ResNet50 + fresh affine head (2048*k + k trainable parameters)."""
    if backbone is None:
        backbone = load_backbone(weights)
    return ClassifierModel(backbone, num_classes, head_seed)


def labels_to_onehot(labels: Sequence[ClassLabel], class_order) -> torch.Tensor:
    index = {label: i for i, label in enumerate(class_order)}
    eye = torch.eye(len(class_order))
    return torch.stack([eye[index[label]] for label in labels])


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def train_classifier(
    model: ClassifierModel,
    train_patches: Sequence[LesionPatch],
    val_patches: Sequence[LesionPatch],
    config: Optional[TrainConfig] = None,
    sampler_weights: Optional[np.ndarray] = None,
    val_sampler_weights: Optional[np.ndarray] = None,
    rng_seed: int = 0,
    train_features: Optional[torch.Tensor] = None,
    val_features: Optional[torch.Tensor] = None,
    feature_cache: Optional[dict] = None,
) -> tuple[ClassifierModel, list[EpochStats]]:
    """Per-class sigmoid-BCE training of the head; returns the best-val checkpoint.

    Optional sampler weights drive with-replacement draws of the training
    batches; validation weights enter as a weighted mean of per-sample losses
    (the expectation of weighted random sampling, kept deterministic).
    """
    if len(train_patches) == 0 or len(val_patches) == 0:
        raise ValueError("train and validation sets must be nonempty")
    config = config or TrainConfig()
    model.standardize_inputs = config.standardize_inputs
    if train_features is None:
        train_features = model.features(train_patches, cache=feature_cache)
    if val_features is None:
        val_features = model.features(val_patches, cache=feature_cache)

    # fixed feature statistics from the training set (not trainable); features
    # that are constant on the training set are centered but left unscaled
    model.feature_mean = train_features.mean(dim=0)
    std = train_features.std(dim=0)
    model.feature_std = torch.where(std > 1e-6, std, torch.ones_like(std))

    train_targets = labels_to_onehot([p.class_label for p in train_patches], model.class_order)
    val_targets = labels_to_onehot([p.class_label for p in val_patches], model.class_order)
    loss_fn = nn.BCEWithLogitsLoss()

    optimizer = torch.optim.Adam(model.head.parameters(), lr=config.lr, betas=config.betas)
    generator = torch.Generator().manual_seed(rng_seed)
    weights_tensor = None
    if sampler_weights is not None:
        weights_tensor = torch.as_tensor(np.asarray(sampler_weights), dtype=torch.float64)
    val_weights = None
    if val_sampler_weights is not None:
        vw = torch.as_tensor(np.asarray(val_sampler_weights), dtype=torch.float32)
        val_weights = vw / vw.sum()

    n = len(train_patches)
    history: list[EpochStats] = []
    best_state = copy.deepcopy(model.head.state_dict())
    best_stats = (float("inf"), -1)
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        if weights_tensor is not None:
            order = torch.multinomial(weights_tensor, n, replacement=True, generator=generator)
        else:
            order = torch.randperm(n, generator=generator)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            optimizer.zero_grad()
            logits = model.logits_from_features(train_features[idx])
            loss = loss_fn(logits, train_targets[idx])
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss.item())
        with torch.no_grad():
            val_logits = model.logits_from_features(val_features)
            per_sample = nn.functional.binary_cross_entropy_with_logits(
                val_logits, val_targets, reduction="none"
            ).mean(dim=1)
            if val_weights is not None:
                val_loss = float((per_sample * val_weights).sum())
            else:
                val_loss = float(per_sample.mean())
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochStats(epoch, float(np.mean(epoch_losses)), val_loss, lr))
        if val_loss < best_stats[0]:
            best_stats = (val_loss, epoch)
            best_state = copy.deepcopy(model.head.state_dict())
    model.head.load_state_dict(best_state)
    return model, history


def predict_proba(
    model: ClassifierModel,
    patches: Sequence[LesionPatch],
    features: Optional[torch.Tensor] = None,
    feature_cache: Optional[dict] = None,
) -> np.ndarray:
    """Per-patch sigmoid scores, one column per class in model.class_order."""
    if features is None:
        features = model.features(patches, cache=feature_cache)
    with torch.no_grad():
        return torch.sigmoid(model.logits_from_features(features)).numpy()


def predict_labels(scores: np.ndarray, class_order=CLASS_ORDER) -> list:
    """Argmax decision; ties break toward the earlier class in class_order."""
    return [class_order[i] for i in np.argmax(scores, axis=1)]


def save_checkpoint(model: ClassifierModel, config: Optional[TrainConfig], path) -> None:
    payload = {
        "schema_version": CHECKPOINT_SCHEMA,
        "class_order": [c.value for c in model.class_order],
        "backbone_id": model.backbone_hash(),
        "config": asdict(config) if config is not None else None,
        "head": model.head.state_dict(),
        "feature_mean": model.feature_mean,
        "feature_std": model.feature_std,
        "standardize_inputs": model.standardize_inputs,
    }
    torch.save(payload, path)


def load_checkpoint(path, backbone: Optional[nn.Module] = None) -> ClassifierModel:
    payload = torch.load(path, weights_only=True)
    if payload["schema_version"] != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {payload['schema_version']!r}")
    model = build_classifier(len(payload["class_order"]), backbone=backbone)
    model.head.load_state_dict(payload["head"])
    model.feature_mean = payload["feature_mean"]
    model.feature_std = payload["feature_std"]
    model.standardize_inputs = payload["standardize_inputs"]
    return model


def save_history(history: Sequence[EpochStats], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for stats in history:
            writer.writerow([stats.epoch, repr(stats.train_loss), repr(stats.val_loss), repr(stats.lr)])
