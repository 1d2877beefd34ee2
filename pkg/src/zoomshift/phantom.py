"""Procedural phantom mammograms with exact lesion masks.

Desk-scale stand-in for restricted clinical data: smooth textured breast
tissue on a dark background, benign lesions as smooth ellipses and malignant
lesions as spiculated star-shaped blobs.
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .records import BiopsyLabel, MammogramRecord, Modality


@dataclass(frozen=True)
class PhantomConfig:
    """Versioned appearance parameters so generated datasets are reproducible."""

    schema_version: str = "phantom-1"
    image_size: int = 256
    texture_waves: int = 6
    texture_freq_range: tuple[float, float] = (1.0, 6.0)
    noise_sigma: float = 2.0
    lesion_radius_range: tuple[float, float] = (8.0, 18.0)
    malignant_fraction: float = 0.35
    spicule_count_range: tuple[int, int] = (7, 12)
    spicule_amplitude_range: tuple[float, float] = (0.5, 0.9)
    benign_eccentricity_range: tuple[float, float] = (0.6, 1.0)
    benign_blur: float = 2.5
    malignant_blur: float = 0.6
    lesion_contrast: float = 0.55


DEFAULT_PHANTOM_CONFIG = PhantomConfig()


def _breast_image(rng: np.random.Generator, cfg: PhantomConfig) -> np.ndarray:
    size = cfg.image_size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    texture = np.zeros((size, size), np.float32)
    lo, hi = cfg.texture_freq_range
    for _ in range(cfg.texture_waves):
        fx, fy = rng.uniform(lo, hi, 2)
        ph = rng.uniform(0, 2 * np.pi, 2)
        texture += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * fx * xx + ph[0]) * np.sin(
            2 * np.pi * fy * yy + ph[1]
        )
    texture = (texture - texture.min()) / (np.ptp(texture) + 1e-9)
    noise = cv2.GaussianBlur(
        rng.standard_normal((size, size)).astype(np.float32), (0, 0), cfg.noise_sigma
    )
    noise = (noise - noise.min()) / (np.ptp(noise) + 1e-9)
    base = 0.35 + 0.3 * texture + 0.15 * noise
    cy = rng.uniform(0.4, 0.6) * size
    breast = (((yy * size - cy) / (0.45 * size)) ** 2 + ((xx * size) / (0.9 * size)) ** 2) < 1.0
    image = np.where(breast, base, 0.02).astype(np.float32)
    return np.clip(image, 0.0, 1.0)


def _add_lesion(
    image: np.ndarray, rng: np.random.Generator, malignant: bool, cfg: PhantomConfig
) -> tuple[np.ndarray, np.ndarray]:
    size = image.shape[0]
    r0 = rng.uniform(*cfg.lesion_radius_range)
    cy = rng.uniform(0.3, 0.6) * size
    cx = rng.uniform(0.15, 0.5) * size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    dy, dx = yy - cy, xx - cx
    if malignant:
        theta = np.arctan2(dy, dx)
        radius = np.hypot(dy, dx)
        k = int(rng.integers(*cfg.spicule_count_range))
        amp = rng.uniform(*cfg.spicule_amplitude_range)
        phase = rng.uniform(0, np.pi)
        boundary = r0 * (1.0 + amp * np.abs(np.sin(k * theta / 2 + phase)))
        inside = radius < boundary
        blob = np.where(inside, 0.95, 0.0).astype(np.float32)
        blob = cv2.GaussianBlur(blob, (0, 0), cfg.malignant_blur)
    else:
        ecc = rng.uniform(*cfg.benign_eccentricity_range)
        angle = rng.uniform(0, np.pi)
        dyr = dy * np.cos(angle) + dx * np.sin(angle)
        dxr = -dy * np.sin(angle) + dx * np.cos(angle)
        inside = (dyr / r0) ** 2 + (dxr / (r0 * ecc)) ** 2 < 1.0
        blob = np.where(inside, 0.8, 0.0).astype(np.float32)
        blob = cv2.GaussianBlur(blob, (0, 0), cfg.benign_blur)
    out = np.clip(image + blob * cfg.lesion_contrast, 0.0, 1.0)
    return out, inside.astype(bool)


def generate_phantom_dataset(
    n_patients: int,
    lesion_prevalence: float = 0.6,
    rng_seed: int = 0,
    config: PhantomConfig = DEFAULT_PHANTOM_CONFIG,
) -> list[MammogramRecord]:
    """One procedural mammogram per patient; deterministic for a fixed seed."""
    if n_patients < 1:
        raise ValueError("n_patients must be >= 1")
    rng = np.random.default_rng(rng_seed)
    records = []
    for idx in range(n_patients):
        patient_id = f"P{idx:04d}"
        image_id = f"{patient_id}_img0"
        modality = Modality.FILM if idx % 2 == 0 else Modality.DIGITAL
        image = _breast_image(rng, config)
        if rng.uniform() < lesion_prevalence:
            malignant = rng.uniform() < config.malignant_fraction
            image, mask = _add_lesion(image, rng, malignant, config)
            label = BiopsyLabel.MALIGNANT if malignant else BiopsyLabel.BENIGN
            records.append(
                MammogramRecord(image_id, patient_id, modality, image, mask, label)
            )
        else:
            records.append(MammogramRecord(image_id, patient_id, modality, image))
    return records
