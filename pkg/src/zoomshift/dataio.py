"""Manifest, patch cache and split file formats."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import cv2
import numpy as np

from .records import (
    BiopsyLabel,
    ClassLabel,
    LesionPatch,
    MammogramRecord,
    Modality,
    SplitAssignment,
    ZoomGroup,
)

MANIFEST_HEADER = ["image_id", "patient_id", "modality", "label", "image_path", "mask_path"]
PATCH_INDEX_HEADER = ["patch_id", "image_id", "patient_id", "zoom_group", "label", "provenance"]


def _write_png16(path: Path, image: np.ndarray) -> None:
    data = np.round(np.clip(image, 0.0, 1.0) * 65535.0).astype(np.uint16)
    cv2.imwrite(str(path), data)


def _read_png_gray(path: Path) -> np.ndarray:
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise FileNotFoundError(path)
    if data.ndim == 3:
        data = data[..., 0]
    scale = 65535.0 if data.dtype == np.uint16 else 255.0
    return (data.astype(np.float32) / scale).astype(np.float32)


def save_manifest(records: Sequence[MammogramRecord], out_dir) -> Path:
    """Write images/masks as 16-bit PNG plus a manifest CSV; returns the CSV path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for record in records:
            image_rel = f"images/{record.image_id}.png"
            _write_png16(out / image_rel, record.pixels)
            mask_rel = ""
            if record.lesion_mask is not None:
                mask_rel = f"masks/{record.image_id}_mask.png"
                cv2.imwrite(str(out / mask_rel), (record.lesion_mask > 0).astype(np.uint8) * 255)
            writer.writerow(
                [
                    record.image_id,
                    record.patient_id,
                    record.modality.value,
                    record.biopsy_label.value,
                    image_rel,
                    mask_rel,
                ]
            )
    return manifest_path


def load_manifest(manifest_csv) -> list[MammogramRecord]:
    path = Path(manifest_csv)
    root = path.parent
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pixels = _read_png_gray(root / row["image_path"])
            mask = None
            if row["mask_path"]:
                mask = (_read_png_gray(root / row["mask_path"]) > 0.5).astype(np.uint8)
            records.append(
                MammogramRecord(
                    image_id=row["image_id"],
                    patient_id=row["patient_id"],
                    modality=Modality(row["modality"]),
                    pixels=pixels,
                    lesion_mask=mask,
                    biopsy_label=BiopsyLabel(row["label"]),
                )
            )
    return records


def save_patch_cache(patches: Sequence[LesionPatch], out_dir) -> Path:
    """Write patches as 16-bit PNG plus an index CSV; returns the index path."""
    out = Path(out_dir)
    (out / "patches").mkdir(parents=True, exist_ok=True)
    index_path = out / "index.csv"
    with open(index_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATCH_INDEX_HEADER)
        for i, patch in enumerate(patches):
            patch_id = f"{patch.source_image_id}_{patch.zoom_group.value}_{i:05d}"
            _write_png16(out / "patches" / f"{patch_id}.png", patch.pixels)
            writer.writerow(
                [
                    patch_id,
                    patch.source_image_id,
                    patch.patient_id,
                    patch.zoom_group.value,
                    patch.class_label.value,
                    patch.provenance,
                ]
            )
    return index_path


def load_patch_cache(cache_dir) -> dict[str, LesionPatch]:
    """Read a patch cache back as {patch_id: LesionPatch}."""
    root = Path(cache_dir)
    patches = {}
    with open(root / "index.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            pixels = _read_png_gray(root / "patches" / f"{row['patch_id']}.png")
            patches[row["patch_id"]] = LesionPatch(
                pixels=pixels,
                zoom_group=ZoomGroup(row["zoom_group"]),
                class_label=ClassLabel(row["label"]),
                source_image_id=row["image_id"],
                patient_id=row["patient_id"],
                provenance=row["provenance"],
            )
    return patches


def save_splits(splits: Sequence[SplitAssignment], path) -> None:
    payload = {
        str(split.fold_id): {
            part: sorted(split.patients(part)) for part in ("train", "val", "test")
        }
        for split in splits
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def load_splits(path) -> list[SplitAssignment]:
    payload = json.loads(Path(path).read_text())
    splits = []
    for fold_id in sorted(payload, key=int):
        assignment = {}
        for part, patients in payload[fold_id].items():
            for patient in patients:
                assignment[patient] = part
        splits.append(SplitAssignment(fold_id=int(fold_id), assignment=assignment))
    return splits
