"""Manifest, patch-cache and split round-trips."""
import hashlib
from pathlib import Path

import numpy as np

from zoomshift.dataio import (
    load_manifest,
    load_patch_cache,
    load_splits,
    save_manifest,
    save_patch_cache,
    save_splits,
)
from zoomshift.patches import lesion_patches, sample_healthy_patches
from zoomshift.phantom import generate_phantom_dataset
from zoomshift.records import BiopsyLabel
from zoomshift.splits import make_splits


def directory_hash(root):
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file() and path.name != "run_manifests.jsonl":
            digest.update(path.relative_to(root).as_posix().encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_manifest_roundtrip(tmp_path):
    records = generate_phantom_dataset(6, lesion_prevalence=0.7, rng_seed=0)
    save_manifest(records, tmp_path)
    loaded = load_manifest(tmp_path / "manifest.csv")
    assert len(loaded) == len(records)
    for a, b in zip(records, sorted(loaded, key=lambda r: r.image_id)):
        assert a.image_id == b.image_id
        assert a.patient_id == b.patient_id
        assert a.modality == b.modality
        assert a.biopsy_label == b.biopsy_label
        # 16-bit quantization bound
        np.testing.assert_allclose(a.pixels, b.pixels, atol=1.0 / 65535 + 1e-6)
        if a.lesion_mask is not None:
            np.testing.assert_array_equal(a.lesion_mask, b.lesion_mask)


def test_manifest_write_is_deterministic(tmp_path):
    records = generate_phantom_dataset(4, lesion_prevalence=0.6, rng_seed=1)
    save_manifest(records, tmp_path / "a")
    save_manifest(records, tmp_path / "b")
    assert directory_hash(tmp_path / "a") == directory_hash(tmp_path / "b")


def test_patch_cache_roundtrip(tmp_path):
    records = generate_phantom_dataset(5, lesion_prevalence=0.8, rng_seed=2)
    patches = []
    for record in records:
        if record.biopsy_label != BiopsyLabel.NONE:
            patches.extend(lesion_patches(record))
        else:
            patches.extend(sample_healthy_patches(record, 2, rng_seed=0))
    save_patch_cache(patches, tmp_path)
    loaded = load_patch_cache(tmp_path)
    assert len(loaded) == len(patches)
    for patch in patches:
        matches = [p for p in loaded.values() if p.source_image_id == patch.source_image_id
                   and p.zoom_group == patch.zoom_group
                   and np.allclose(p.pixels, patch.pixels, atol=1.0 / 65535 + 1e-6)]
        assert matches, patch.source_image_id
        assert matches[0].class_label == patch.class_label
        assert matches[0].provenance == patch.provenance


def test_patch_cache_rerun_is_idempotent(tmp_path):
    records = generate_phantom_dataset(3, lesion_prevalence=1.0, rng_seed=3)
    patches = [p for r in records for p in lesion_patches(r)]
    save_patch_cache(patches, tmp_path / "x")
    first = directory_hash(tmp_path / "x")
    save_patch_cache(patches, tmp_path / "x")
    assert directory_hash(tmp_path / "x") == first


def test_splits_roundtrip(tmp_path):
    records = generate_phantom_dataset(12, lesion_prevalence=0.5, rng_seed=4)
    splits = make_splits(records, rng_seed=5)
    save_splits(splits, tmp_path / "splits.json")
    loaded = load_splits(tmp_path / "splits.json")
    assert [s.fold_id for s in loaded] == [s.fold_id for s in splits]
    assert [s.assignment for s in loaded] == [s.assignment for s in splits]
