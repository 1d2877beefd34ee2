"""Bounding boxes, zoom expansion and patch extraction."""
from __future__ import annotations

import numpy as np
import cv2
from scipy import ndimage

from .errors import EmptyMask, InsufficientTissue, InvalidBox
from .records import (
    PATCH_SIZE,
    BiopsyLabel,
    BoundingBox,
    ClassLabel,
    LesionPatch,
    MammogramRecord,
    ZoomGroup,
)

# Intensity above which a pixel counts as breast tissue (phantom background is ~0).
FOREGROUND_THRESHOLD = 0.1


def tight_bbox(mask: np.ndarray) -> BoundingBox:
    """Minimal axis-aligned box covering all nonzero mask pixels."""
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise EmptyMask("mask contains no nonzero pixel")
    top, bottom = int(rows.min()), int(rows.max()) + 1
    left, right = int(cols.min()), int(cols.max()) + 1
    return BoundingBox(
        center_row=(top + bottom) / 2.0,
        center_col=(left + right) / 2.0,
        height=float(bottom - top),
        width=float(right - left),
        top=top,
        left=left,
        bottom=bottom,
        right=right,
    )


def _clamp_axis(center: float, nominal: float, limit: int) -> tuple[int, int]:
    """Clamped [start, stop) for one axis: shift inward, clip only if oversized."""
    size = min(int(round(nominal)), limit)
    size = max(size, 1)
    start = int(round(center - nominal / 2.0))
    start = min(max(start, 0), limit - size)
    return start, start + size


def expand_bbox(box: BoundingBox, group: ZoomGroup, image_shape: tuple[int, int]) -> BoundingBox:
    """Scale the box about its center by the group's expansion factor.

    The clamped extent keeps the nominal size by translating inward when the
    nominal box sticks out of the image; it is clipped only when the nominal
    size exceeds the image in that dimension.
    """
    factor = group.expansion_factor
    height = box.height * factor
    width = box.width * factor
    n_rows, n_cols = image_shape
    top, bottom = _clamp_axis(box.center_row, height, n_rows)
    left, right = _clamp_axis(box.center_col, width, n_cols)
    return BoundingBox(
        center_row=box.center_row,
        center_col=box.center_col,
        height=height,
        width=width,
        top=top,
        left=left,
        bottom=bottom,
        right=right,
    )


def resize_bilinear(image: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to (rows, cols) with half-pixel centers."""
    rows, cols = shape
    return cv2.resize(image.astype(np.float32), (cols, rows), interpolation=cv2.INTER_LINEAR)


def normalize01(image: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0, 1]; constant inputs map to all-zeros."""
    lo = float(image.min())
    hi = float(image.max())
    if hi - lo <= 0.0:
        return np.zeros_like(image, dtype=np.float32)
    return ((image - lo) / (hi - lo)).astype(np.float32)


def patch_from_array(
    array: np.ndarray,
    zoom_group: ZoomGroup,
    class_label: ClassLabel,
    source_image_id: str,
    patient_id: str,
    provenance: str = "real",
) -> LesionPatch:
    """Resize an arbitrary 2-D crop to 224x224 and normalize it into a patch."""
    if array.size == 0:
        raise InvalidBox("cannot build a patch from an empty crop")
    resized = resize_bilinear(array, (PATCH_SIZE, PATCH_SIZE))
    plane = np.clip(normalize01(resized), 0.0, 1.0)
    return LesionPatch(
        pixels=plane,
        zoom_group=zoom_group,
        class_label=class_label,
        source_image_id=source_image_id,
        patient_id=patient_id,
        provenance=provenance,
    )


def extract_patch(
    record: MammogramRecord,
    box: BoundingBox,
    group: ZoomGroup,
    label: ClassLabel,
) -> LesionPatch:
    """Crop the clamped box, resize to 224x224 and min-max normalize."""
    if box.clamped_area <= 0:
        raise InvalidBox("bounding box has zero clamped area")
    n_rows, n_cols = record.pixels.shape
    if box.top < 0 or box.left < 0 or box.bottom > n_rows or box.right > n_cols:
        raise InvalidBox("bounding box extends outside the image")
    crop = record.pixels[box.top : box.bottom, box.left : box.right]
    return patch_from_array(crop, group, label, record.image_id, record.patient_id)


def lesion_patches(record: MammogramRecord, groups=tuple(ZoomGroup)) -> list[LesionPatch]:
    """All zoom-group patches for a lesion-bearing record."""
    if record.biopsy_label == BiopsyLabel.NONE:
        raise EmptyMask("record has no lesion annotation")
    label = ClassLabel(record.biopsy_label.value)
    base = tight_bbox(record.lesion_mask)
    out = []
    for group in groups:
        box = expand_bbox(base, group, record.pixels.shape)
        out.append(extract_patch(record, box, group, label))
    return out


def sample_healthy_patches(
    record: MammogramRecord,
    count: int,
    rng_seed: int,
    side_range: tuple[int, int] = (24, 96),
    threshold: float = FOREGROUND_THRESHOLD,
    return_boxes: bool = False,
):
    """Random square crops from the thresholded breast foreground of a normal image.

    Each crop lies fully inside the foreground (box-erosion check) and is
    assigned a zoom group round-robin so every group regime sees healthy samples.
    With return_boxes=True also returns the (top, left, side) of every crop.
    """
    if record.biopsy_label != BiopsyLabel.NONE:
        raise ValueError("healthy patches are sampled from normal records only")
    if count == 0:
        return ([], []) if return_boxes else []
    rng = np.random.default_rng(rng_seed)
    foreground = record.pixels > threshold
    n_rows, n_cols = foreground.shape
    groups = list(ZoomGroup)
    patches = []
    boxes = []
    for index in range(count):
        side = int(rng.integers(side_range[0], side_range[1] + 1))
        center_ok = _valid_centers(foreground, side)
        while not center_ok.any() and side > 2:
            side = max(2, side // 2)
            center_ok = _valid_centers(foreground, side)
        candidates = np.flatnonzero(center_ok)
        if candidates.size == 0:
            raise InsufficientTissue(
                f"no {side}x{side} crop fits inside the breast foreground of {record.image_id}"
            )
        flat = candidates[rng.integers(0, candidates.size)]
        cr, cc = divmod(int(flat), n_cols)
        top = min(max(cr - side // 2, 0), n_rows - side)
        left = min(max(cc - side // 2, 0), n_cols - side)
        crop = record.pixels[top : top + side, left : left + side]
        group = groups[index % len(groups)]
        boxes.append((top, left, side))
        patches.append(
            patch_from_array(crop, group, ClassLabel.HEALTHY, record.image_id, record.patient_id)
        )
    return (patches, boxes) if return_boxes else patches


def _valid_centers(foreground: np.ndarray, side: int) -> np.ndarray:
    """Boolean map of centers whose side x side crop stays inside the foreground."""
    eroded = ndimage.minimum_filter(foreground, size=side, mode="constant", cval=False)
    n_rows, n_cols = foreground.shape
    ok = np.zeros_like(foreground)
    half = side // 2
    r0, r1 = half, n_rows - (side - half)
    c0, c1 = half, n_cols - (side - half)
    if r1 > r0 and c1 > c0:
        ok[r0:r1, c0:c1] = eroded[r0:r1, c0:c1]
    return ok
