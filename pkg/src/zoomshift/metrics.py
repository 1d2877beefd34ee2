"""SiFID, accuracy, one-vs-rest ROC-AUC and fold aggregation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
from scipy.stats import rankdata

from .backbone import early_feature_module, load_backbone
from .errors import EmptyInput, NumericalError, ShapeError, UndefinedAUC
from .patches import resize_bilinear
from .records import CLASS_ORDER, ClassLabel

SIFID_FEATURE_LAYER = "resnet50/conv1-pool"  # first pooling stage, 64 channels
SIFID_INPUT_SIZE = 224


@dataclass
class FeatureStats:
    """Mean and covariance of one feature map over its spatial positions."""

    mean: np.ndarray
    covariance: np.ndarray
    n_locations: int


def feature_stats_from_map(feature_map: np.ndarray) -> FeatureStats:
    """(C, H, W) feature map -> stats over the H*W spatial samples."""
    channels = feature_map.shape[0]
    samples = feature_map.reshape(channels, -1).T  # (HW, C)
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False)
    return FeatureStats(mean=mean, covariance=cov, n_locations=samples.shape[0])


def image_feature_stats(image: np.ndarray, extractor: nn.Module) -> FeatureStats:
    """Early-layer statistics of a grayscale [0, 1] image of any size."""
    resized = resize_bilinear(np.asarray(image, dtype=np.float32), (SIFID_INPUT_SIZE, SIFID_INPUT_SIZE))
    batch = torch.from_numpy(np.stack([resized] * 3))[None]
    with torch.no_grad():
        fmap = extractor(batch)[0].numpy()
    return feature_stats_from_map(fmap)


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root by eigendecomposition; tiny negatives clipped."""
    sym = (matrix + matrix.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -1e-6 * scale:
        raise NumericalError(f"matrix not PSD: min eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(C_a + C_b - 2 (C_a C_b)^(1/2))."""
    diff = a.mean - b.mean
    sqrt_a = _sqrtm_psd(a.covariance)
    cross = _sqrtm_psd(sqrt_a @ b.covariance @ sqrt_a)
    value = float(
        diff @ diff
        + np.trace(a.covariance)
        + np.trace(b.covariance)
        - 2.0 * np.trace(cross)
    )
    return max(value, 0.0)


def default_sifid_extractor(weights: str = "auto") -> nn.Module:
    return early_feature_module(load_backbone(weights))


def sifid(
    real_image: np.ndarray, synthetic_image: np.ndarray, extractor: nn.Module
) -> float:
    """Frechet distance between early-feature statistics of two single images."""
    return frechet_distance(
        image_feature_stats(real_image, extractor),
        image_feature_stats(synthetic_image, extractor),
    )


def roc_auc_ovr(
    scores: np.ndarray, labels: Sequence[ClassLabel], class_order=CLASS_ORDER
) -> dict:
    """Per-class one-vs-rest AUC; tied scores contribute 1/2 (rank statistic)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != len(labels):
        raise ShapeError("scores must be (n_samples, n_classes) matching labels")
    out = {}
    labels = list(labels)
    for column, cls in enumerate(class_order):
        positive = np.asarray([label == cls for label in labels])
        n_pos = int(positive.sum())
        n_neg = len(labels) - n_pos
        if n_pos == 0 or n_neg == 0:
            raise UndefinedAUC(f"class {cls.value} lacks positives or negatives")
        ranks = rankdata(scores[:, column])
        auc = (ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
        out[cls] = float(auc)
    return out


def accuracy(predicted: Sequence, true: Sequence) -> float:
    if len(predicted) != len(true):
        raise ShapeError("predicted and true label lists differ in length")
    if len(true) == 0:
        raise ShapeError("empty label lists")
    return float(np.mean([p == t for p, t in zip(predicted, true)]))


@dataclass
class FoldAggregate:
    mean: float
    sd: float  # sample SD (n-1); zero by convention for a single fold
    n: int

    @property
    def single_fold(self) -> bool:
        return self.n == 1


def aggregate_folds(values: Sequence[float]) -> FoldAggregate:
    if len(values) == 0:
        raise EmptyInput("no fold values to aggregate")
    arr = np.asarray(values, dtype=np.float64)
    sd = 0.0 if arr.size == 1 else float(arr.std(ddof=1))
    return FoldAggregate(mean=float(arr.mean()), sd=sd, n=arr.size)


@dataclass
class MetricsReport:
    overall_accuracy: FoldAggregate
    auc_per_class: dict  # ClassLabel -> FoldAggregate
    n_folds: int
    config_fingerprint: str
    cell: dict = field(default_factory=dict)  # train/test/augmentation description

    def to_json_dict(self) -> dict:
        return {
            "cell": self.cell,
            "n_folds": self.n_folds,
            "config_fingerprint": self.config_fingerprint,
            "overall_accuracy": {"mean": self.overall_accuracy.mean, "sd": self.overall_accuracy.sd},
            "auc_per_class": {
                cls.value: {"mean": agg.mean, "sd": agg.sd}
                for cls, agg in self.auc_per_class.items()
            },
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "MetricsReport":
        acc = payload["overall_accuracy"]
        return cls(
            overall_accuracy=FoldAggregate(acc["mean"], acc["sd"], payload["n_folds"]),
            auc_per_class={
                ClassLabel(name): FoldAggregate(v["mean"], v["sd"], payload["n_folds"])
                for name, v in payload["auc_per_class"].items()
            },
            n_folds=payload["n_folds"],
            config_fingerprint=payload["config_fingerprint"],
            cell=payload.get("cell", {}),
        )


RESULTS_CSV_HEADER = [
    "cell",
    "train_groups",
    "test_groups",
    "augmentation",
    "n_models",
    "crop_probe",
    "split_mode",
    "accuracy_mean",
    "accuracy_sd",
    "auc_healthy_mean",
    "auc_healthy_sd",
    "auc_benign_mean",
    "auc_benign_sd",
    "auc_malignant_mean",
    "auc_malignant_sd",
    "n_runs",
    "fingerprint",
]


def report_csv_row(report: MetricsReport) -> list:
    cell = report.cell
    row = [
        cell.get("name", ""),
        cell.get("train_groups", ""),
        cell.get("test_groups", ""),
        cell.get("augmentation", "none"),
        cell.get("n_models", 0),
        cell.get("crop_probe", False),
        cell.get("split_mode", ""),
        repr(report.overall_accuracy.mean),
        repr(report.overall_accuracy.sd),
    ]
    for cls in CLASS_ORDER:
        agg = report.auc_per_class.get(cls)
        row.extend([repr(agg.mean), repr(agg.sd)] if agg else ["", ""])
    row.extend([report.n_folds, report.config_fingerprint])
    return row
