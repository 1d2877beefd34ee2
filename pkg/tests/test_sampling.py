"""Inverse-frequency sampling weights."""
import numpy as np
import pytest

from zoomshift.errors import DegenerateLabels
from zoomshift.records import ClassLabel
from zoomshift.sampling import weighted_sampler_weights


def test_weights_are_inverse_class_counts():
    labels = [ClassLabel.HEALTHY] * 6 + [ClassLabel.BENIGN] * 3 + [ClassLabel.MALIGNANT] * 1
    weights = weighted_sampler_weights(labels)
    np.testing.assert_allclose(weights[:6], 1 / 6)
    np.testing.assert_allclose(weights[6:9], 1 / 3)
    np.testing.assert_allclose(weights[9:], 1.0)


def test_expected_class_mass_is_uniform():
    rng = np.random.default_rng(0)
    labels = [rng.choice(list(ClassLabel)) for _ in range(200)]
    weights = weighted_sampler_weights(labels)
    mass = {}
    for label, w in zip(labels, weights):
        mass[label] = mass.get(label, 0.0) + w
    values = np.array(list(mass.values()))
    np.testing.assert_allclose(values, values[0])


def test_empty_labels_rejected():
    with pytest.raises(DegenerateLabels):
        weighted_sampler_weights([])


def test_missing_requested_class_rejected():
    with pytest.raises(DegenerateLabels):
        weighted_sampler_weights([ClassLabel.HEALTHY], classes=list(ClassLabel))


def test_explicit_class_list_restricts_counting():
    labels = [ClassLabel.HEALTHY, ClassLabel.HEALTHY, ClassLabel.BENIGN]
    weights = weighted_sampler_weights(labels, classes=[ClassLabel.HEALTHY, ClassLabel.BENIGN])
    np.testing.assert_allclose(weights, [0.5, 0.5, 1.0])
