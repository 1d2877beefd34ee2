"""Core domain types: mammogram records, zoom groups, boxes and patches."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

PATCH_SIZE = 224


class Modality(str, Enum):
    FILM = "film"
    DIGITAL = "digital"


class BiopsyLabel(str, Enum):
    NONE = "none"
    BENIGN = "benign"
    MALIGNANT = "malignant"


class ClassLabel(str, Enum):
    HEALTHY = "healthy"
    BENIGN = "benign"
    MALIGNANT = "malignant"


# Fixed class order used by the classifier head and all reports.
CLASS_ORDER = (ClassLabel.HEALTHY, ClassLabel.BENIGN, ClassLabel.MALIGNANT)


class ZoomGroup(str, Enum):
    G1 = "G1"
    G2 = "G2"
    G3 = "G3"

    @property
    def expansion_factor(self) -> float:
        return {ZoomGroup.G1: 1.0, ZoomGroup.G2: 2.0, ZoomGroup.G3: 3.0}[self]


@dataclass(frozen=True, eq=False)
class MammogramRecord:
    """One grayscale mammogram with optional lesion annotation."""

    image_id: str
    patient_id: str
    modality: Modality
    pixels: np.ndarray
    lesion_mask: Optional[np.ndarray] = None
    biopsy_label: BiopsyLabel = BiopsyLabel.NONE

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        if float(self.pixels.min()) < 0.0 or float(self.pixels.max()) > 1.0:
            raise ValueError("pixel intensities must lie in [0, 1]")
        if self.lesion_mask is not None and self.lesion_mask.shape != self.pixels.shape:
            raise ValueError("lesion_mask shape must equal pixel shape")
        if self.biopsy_label != BiopsyLabel.NONE:
            if self.lesion_mask is None or not np.any(self.lesion_mask):
                raise ValueError("a biopsy label requires a nonempty lesion mask")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: nominal (pre-clamp) size plus clamped integer extent.

    The extent is half-open: rows [top, bottom), columns [left, right).
    """

    center_row: float
    center_col: float
    height: float
    width: float
    top: int
    left: int
    bottom: int
    right: int

    @property
    def clamped_height(self) -> int:
        return self.bottom - self.top

    @property
    def clamped_width(self) -> int:
        return self.right - self.left

    @property
    def clamped_area(self) -> int:
        return self.clamped_height * self.clamped_width

    def nominal_extent(self) -> tuple[float, float, float, float]:
        """(top, bottom, left, right) of the un-clamped box about its center."""
        return (
            self.center_row - self.height / 2.0,
            self.center_row + self.height / 2.0,
            self.center_col - self.width / 2.0,
            self.center_col + self.width / 2.0,
        )


@dataclass(frozen=True, eq=False)
class LesionPatch:
    """A 224x224 normalized patch; grayscale plane stored once, replicated on export."""

    pixels: np.ndarray
    zoom_group: ZoomGroup
    class_label: ClassLabel
    source_image_id: str
    patient_id: str
    provenance: str = "real"

    def __post_init__(self):
        if self.pixels.shape != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError("patch values must lie in [0, 1]")

    @property
    def is_synthetic(self) -> bool:
        return self.provenance.startswith("synthetic")

    def chw(self) -> np.ndarray:
        """(3, 224, 224) array with three identical channels."""
        plane = self.pixels.astype(np.float32)
        return np.stack([plane, plane, plane], axis=0)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.pixels, dtype=np.float32).tobytes())
        h.update(self.zoom_group.value.encode())
        return h.hexdigest()


def synthetic_provenance(model_id: str) -> str:
    return f"synthetic:{model_id}"


@dataclass
class SplitAssignment:
    """Patient-level partition assignment for one fold."""

    fold_id: int
    assignment: dict = field(default_factory=dict)  # patient_id -> "train"|"val"|"test"

    def patients(self, partition: str) -> set:
        return {p for p, part in self.assignment.items() if part == partition}
