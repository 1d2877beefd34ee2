"""Augmented training sets, crop probe, ensembles and config fingerprints."""
import warnings

import numpy as np
import pytest

from zoomshift.classifier import TrainConfig
from zoomshift.errors import ConfigError, IncompatibleMembers, NothingToBalance
from zoomshift.experiments import (
    Augmentation,
    EnsemblePredictor,
    ExperimentConfig,
    assemble_augmented_trainset,
    augmentation_study_grid,
    default_shift_grid,
    ensemble_predict,
    oversample_images,
    random_resized_crop,
)
from zoomshift.patches import patch_from_array
from zoomshift.records import CLASS_ORDER, ClassLabel, ZoomGroup


def make_patch(cls, image_id, group=ZoomGroup.G3, seed=0):
    rng = np.random.default_rng(seed)
    return patch_from_array(
        rng.uniform(size=(32, 32)), group, cls, image_id, f"patient-{image_id}"
    )


class FakeSinGAN:
    """Stands in for a trained generator: deterministic per-seed samples."""

    def __init__(self, model_id):
        self.training_image_id = model_id

    def sample(self, count, rng_seed=0):
        rng = np.random.default_rng(rng_seed)
        return [rng.uniform(size=(32, 32)) for _ in range(count)]


def base_set(n_benign=101, n_malignant=60):
    patches = [make_patch(ClassLabel.BENIGN, f"b{i}", seed=i) for i in range(n_benign)]
    patches += [make_patch(ClassLabel.MALIGNANT, f"m{i}", seed=1000 + i) for i in range(n_malignant)]
    return patches


def test_assemble_balances_to_majority_count():
    models = [(f"mdl{i}", FakeSinGAN(f"mdl{i}")) for i in range(4)]
    out = assemble_augmented_trainset(base_set(), models, rng_seed=0)
    synthetic = [p for p in out if p.is_synthetic]
    assert len(synthetic) == 101 - 60
    counts = {}
    for p in synthetic:
        counts[p.provenance] = counts.get(p.provenance, 0) + 1
    # remainder goes to earlier models by id order: 41 = 11 + 10 + 10 + 10
    assert sorted(counts.values(), reverse=True) == [11, 10, 10, 10]
    assert counts["synthetic:mdl0"] == 11


def test_assemble_synthetic_patches_are_g1_target_class():
    models = [("m", FakeSinGAN("m"))]
    out = assemble_augmented_trainset(base_set(10, 7), models, rng_seed=1)
    synthetic = [p for p in out if p.is_synthetic]
    assert len(synthetic) == 3
    assert all(p.zoom_group == ZoomGroup.G1 for p in synthetic)
    assert all(p.class_label == ClassLabel.MALIGNANT for p in synthetic)
    assert all(p.provenance == "synthetic:m" for p in synthetic)


def test_assemble_nonminority_target_warns_and_noops():
    patches = base_set(5, 9)  # malignant already majority
    with pytest.warns(NothingToBalance):
        out = assemble_augmented_trainset(patches, [("m", FakeSinGAN("m"))])
    assert out == patches


def test_assemble_is_deterministic():
    models = [("m0", FakeSinGAN("m0")), ("m1", FakeSinGAN("m1"))]
    a = assemble_augmented_trainset(base_set(20, 10), models, rng_seed=5)
    b = assemble_augmented_trainset(base_set(20, 10), models, rng_seed=5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.pixels, y.pixels)


def test_oversample_round_robin_counts():
    patches = base_set(19, 10)
    pool = [make_patch(ClassLabel.MALIGNANT, f"src{i}", group=ZoomGroup.G1) for i in range(4)]
    out = oversample_images([f"src{i}" for i in range(4)], patches, pool=pool)
    added = out[len(patches):]
    assert len(added) == 9
    counts = {}
    for p in added:
        counts[p.source_image_id] = counts.get(p.source_image_id, 0) + 1
    assert sorted(counts.values(), reverse=True) == [3, 2, 2, 2]
    assert counts["src0"] == 3
    assert all(p.provenance.startswith("oversample:") for p in added)


def test_oversample_missing_image_rejected():
    with pytest.raises(ValueError):
        oversample_images(["nope"], base_set(5, 3))


def test_oversample_balanced_input_warns():
    with pytest.warns(NothingToBalance):
        out = oversample_images(
            ["m0"], base_set(5, 5),
            pool=[make_patch(ClassLabel.MALIGNANT, "m0", group=ZoomGroup.G1)],
        )
    assert len(out) == 10


def test_crop_identity_ranges_return_same_pixels():
    patch = make_patch(ClassLabel.BENIGN, "x", seed=3)
    out = random_resized_crop(patch, scale_range=(1.0, 1.0), aspect_range=(1.0, 1.0), rng_seed=0)
    np.testing.assert_allclose(out.pixels, patch.pixels, atol=1e-6)


def test_crop_area_fractions_within_range():
    patch = make_patch(ClassLabel.BENIGN, "y", seed=4)
    area = patch.pixels.size
    for seed in range(50):
        _, (top, left, h, w) = random_resized_crop(patch, rng_seed=seed, return_geometry=True)
        assert 0.5 <= (h * w) / area <= 1.0
        assert 0 <= top <= 224 - h and 0 <= left <= 224 - w


def test_crop_deterministic_per_seed():
    patch = make_patch(ClassLabel.BENIGN, "z", seed=5)
    a = random_resized_crop(patch, rng_seed=9)
    b = random_resized_crop(patch, rng_seed=9)
    c = random_resized_crop(patch, rng_seed=10)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, c.pixels)


def test_crop_preserves_metadata():
    patch = make_patch(ClassLabel.MALIGNANT, "meta", seed=6)
    out = random_resized_crop(patch, rng_seed=0)
    assert out.class_label == patch.class_label
    assert out.zoom_group == patch.zoom_group
    assert out.source_image_id == patch.source_image_id
    assert out.provenance == patch.provenance


def test_crop_rejects_bad_ranges():
    patch = make_patch(ClassLabel.BENIGN, "bad")
    with pytest.raises(ConfigError):
        random_resized_crop(patch, scale_range=(0.0, 1.0))
    with pytest.raises(ConfigError):
        random_resized_crop(patch, scale_range=(0.9, 0.5))
    with pytest.raises(ConfigError):
        random_resized_crop(patch, aspect_range=(-1.0, 1.0))


class FakeMember:
    def __init__(self, scores, class_order=CLASS_ORDER):
        self.scores = scores
        self.class_order = class_order


def fake_predict(member, patches, feature_cache=None):
    return member.scores


def test_singleton_ensemble_identity(monkeypatch):
    monkeypatch.setattr("zoomshift.experiments.predict_proba", fake_predict)
    scores = np.random.default_rng(0).uniform(size=(5, 3))
    ensemble = EnsemblePredictor([FakeMember(scores)])
    np.testing.assert_array_equal(ensemble_predict(ensemble, [None] * 5), scores)


def test_ensemble_mean_and_permutation_invariance(monkeypatch):
    monkeypatch.setattr("zoomshift.experiments.predict_proba", fake_predict)
    rng = np.random.default_rng(1)
    members = [FakeMember(rng.uniform(size=(4, 3))) for _ in range(3)]
    forward = ensemble_predict(EnsemblePredictor(members), [None] * 4)
    backward = ensemble_predict(EnsemblePredictor(members[::-1]), [None] * 4)
    expected = np.mean([m.scores for m in members], axis=0)
    np.testing.assert_allclose(forward, expected, atol=1e-12)
    np.testing.assert_allclose(forward, backward, atol=1e-12)


def test_ensemble_rejects_mismatched_class_orders():
    a = FakeMember(np.zeros((1, 3)))
    b = FakeMember(np.zeros((1, 3)))
    b.class_order = tuple(reversed(CLASS_ORDER))
    with pytest.raises(IncompatibleMembers):
        EnsemblePredictor([a, b])


def test_ensemble_requires_members():
    with pytest.raises(ValueError):
        EnsemblePredictor([])


def test_fingerprints_differ_iff_configs_differ():
    a = ExperimentConfig(name="a", train_groups=(ZoomGroup.G1,), test_groups=(ZoomGroup.G1,))
    same = ExperimentConfig(name="renamed", train_groups=(ZoomGroup.G1,), test_groups=(ZoomGroup.G1,))
    different = ExperimentConfig(name="a", train_groups=(ZoomGroup.G2,), test_groups=(ZoomGroup.G1,))
    assert a.fingerprint() == same.fingerprint()  # the display name is cosmetic
    assert a.fingerprint() != different.fingerprint()
    assert a.fingerprint() != ExperimentConfig(
        name="a", train_groups=(ZoomGroup.G1,), test_groups=(ZoomGroup.G1,),
        augmentation=Augmentation(kind="singan", n_models=2),
    ).fingerprint()


def test_default_grid_has_eleven_cells():
    grid = default_shift_grid()
    assert len(grid) == 11
    names = [c.name for c in grid]
    assert len(set(names)) == 11
    fingerprints = {c.fingerprint() for c in grid}
    assert len(fingerprints) == 11


def test_augmentation_grid_zero_row_matches_plain_baseline():
    cells = augmentation_study_grid((0, 1, 2, 4), ("s0", "s1", "s2", "s3"))
    baseline = cells[0]
    assert baseline.augmentation.kind == "none"
    plain = ExperimentConfig(
        name="anything", train_groups=(ZoomGroup.G3,), test_groups=(ZoomGroup.G1,),
    )
    assert baseline.fingerprint() == plain.fingerprint()


def test_unknown_augmentation_kind_rejected():
    with pytest.raises(ConfigError):
        Augmentation(kind="mystery")
