"""Procedural dataset generator: determinism, masks, prevalence, ranges."""
from collections import Counter

import numpy as np

from zoomshift.phantom import PhantomConfig, generate_phantom_dataset
from zoomshift.records import BiopsyLabel, Modality


def test_generation_is_deterministic():
    a = generate_phantom_dataset(12, lesion_prevalence=0.5, rng_seed=42)
    b = generate_phantom_dataset(12, lesion_prevalence=0.5, rng_seed=42)
    for x, y in zip(a, b):
        assert x.image_id == y.image_id
        np.testing.assert_array_equal(x.pixels, y.pixels)
        if x.lesion_mask is not None:
            np.testing.assert_array_equal(x.lesion_mask, y.lesion_mask)


def test_different_seeds_differ():
    a = generate_phantom_dataset(4, rng_seed=0)
    b = generate_phantom_dataset(4, rng_seed=1)
    assert any(not np.array_equal(x.pixels, y.pixels) for x, y in zip(a, b))


def test_one_record_per_patient_and_unique_ids():
    records = generate_phantom_dataset(25, rng_seed=5)
    assert len(records) == 25
    assert len({r.patient_id for r in records}) == 25
    assert len({r.image_id for r in records}) == 25


def test_intensities_and_mask_contracts():
    for record in generate_phantom_dataset(10, lesion_prevalence=0.8, rng_seed=9):
        assert record.pixels.min() >= 0.0 and record.pixels.max() <= 1.0
        if record.biopsy_label != BiopsyLabel.NONE:
            assert record.lesion_mask is not None and record.lesion_mask.any()
            # lesion sits inside the breast, not on the dark background
            assert record.pixels[record.lesion_mask].mean() > 0.1


def test_prevalence_roughly_respected():
    records = generate_phantom_dataset(200, lesion_prevalence=0.6, rng_seed=1)
    lesions = sum(r.biopsy_label != BiopsyLabel.NONE for r in records)
    assert 90 <= lesions <= 150


def test_both_lesion_classes_and_modalities_present():
    records = generate_phantom_dataset(60, lesion_prevalence=0.7, rng_seed=2)
    labels = Counter(r.biopsy_label for r in records)
    assert labels[BiopsyLabel.BENIGN] > 0 and labels[BiopsyLabel.MALIGNANT] > 0
    modalities = {r.modality for r in records}
    assert modalities == {Modality.FILM, Modality.DIGITAL}


def test_image_size_follows_config():
    config = PhantomConfig(image_size=128)
    records = generate_phantom_dataset(3, rng_seed=0, config=config)
    assert all(r.pixels.shape == (128, 128) for r in records)
