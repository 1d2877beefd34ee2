"""Bounding-box geometry: tight boxes, zoom expansion, border clamping."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zoomshift.errors import EmptyMask
from zoomshift.patches import expand_bbox, tight_bbox
from zoomshift.records import BoundingBox, ZoomGroup


def reference_clamp_and_shift(center, nominal, size):
    """Independent 1-D clamp: shift the nominal extent inward, clip if oversized."""
    if nominal >= size:
        return 0, size
    lo = int(round(center - nominal / 2.0))
    lo = min(max(lo, 0), size - int(round(nominal)))
    return lo, lo + int(round(nominal))


def random_mask(rng, shape=(100, 100)):
    mask = np.zeros(shape, dtype=bool)
    h = rng.integers(1, shape[0] // 2)
    w = rng.integers(1, shape[1] // 2)
    r = rng.integers(0, shape[0] - h)
    c = rng.integers(0, shape[1] - w)
    mask[r : r + h, c : c + w] = True
    return mask, (r, c, h, w)


def test_tight_bbox_matches_nonzero_extent():
    rng = np.random.default_rng(0)
    for _ in range(200):
        mask, (r, c, h, w) = random_mask(rng)
        box = tight_bbox(mask)
        assert (box.top, box.left, box.bottom, box.right) == (r, c, r + h, c + w)


def test_tight_bbox_rejects_empty_mask():
    with pytest.raises(EmptyMask):
        tight_bbox(np.zeros((10, 10), dtype=bool))


def test_single_pixel_mask():
    mask = np.zeros((50, 50), dtype=bool)
    mask[20, 30] = True
    box = tight_bbox(mask)
    assert box.bottom - box.top == 1 and box.right - box.left == 1


def test_expansion_factors_scale_nominal_dimensions():
    rng = np.random.default_rng(1)
    for _ in range(500):
        mask, _ = random_mask(rng)
        g1 = tight_bbox(mask)
        for group, factor in ((ZoomGroup.G2, 2.0), (ZoomGroup.G3, 3.0)):
            grown = expand_bbox(g1, group, mask.shape)
            assert grown.height == pytest.approx(factor * g1.height)
            assert grown.width == pytest.approx(factor * g1.width)
            assert grown.center_row == pytest.approx(g1.center_row)
            assert grown.center_col == pytest.approx(g1.center_col)


def test_clamping_matches_reference_implementation():
    rng = np.random.default_rng(2)
    shape = (100, 100)
    for _ in range(500):
        mask, _ = random_mask(rng, shape)
        g1 = tight_bbox(mask)
        for group in (ZoomGroup.G2, ZoomGroup.G3):
            grown = expand_bbox(g1, group, shape)
            top, bottom = reference_clamp_and_shift(grown.center_row, grown.height, shape[0])
            left, right = reference_clamp_and_shift(grown.center_col, grown.width, shape[1])
            assert (grown.top, grown.bottom) == (top, bottom)
            assert (grown.left, grown.right) == (left, right)


def test_corner_box_g3_clips_to_full_image():
    mask = np.zeros((100, 100), dtype=bool)
    mask[0:80, 0:80] = True
    grown = expand_bbox(tight_bbox(mask), ZoomGroup.G3, mask.shape)
    assert (grown.top, grown.left, grown.bottom, grown.right) == (0, 0, 100, 100)


def test_border_box_shifts_inward_preserving_size():
    mask = np.zeros((100, 100), dtype=bool)
    mask[0:10, 0:10] = True  # corner lesion
    grown = expand_bbox(tight_bbox(mask), ZoomGroup.G2, mask.shape)
    assert grown.bottom - grown.top == 20
    assert grown.right - grown.left == 20
    assert grown.top == 0 and grown.left == 0


@settings(max_examples=200, deadline=None)
@given(
    r=st.integers(0, 90),
    c=st.integers(0, 90),
    h=st.integers(1, 10),
    w=st.integers(1, 10),
    group=st.sampled_from([ZoomGroup.G2, ZoomGroup.G3]),
)
def test_containment_chain_property(r, c, h, w, group):
    mask = np.zeros((100, 100), dtype=bool)
    mask[r : r + h, c : c + w] = True
    g1 = tight_bbox(mask)
    grown = expand_bbox(g1, group, mask.shape)
    assert grown.top <= g1.top and grown.left <= g1.left
    assert grown.bottom >= g1.bottom and grown.right >= g1.right
    assert 0 <= grown.top < grown.bottom <= 100
    assert 0 <= grown.left < grown.right <= 100


def test_g2_contained_in_g3():
    rng = np.random.default_rng(3)
    for _ in range(200):
        mask, _ = random_mask(rng)
        g1 = tight_bbox(mask)
        g2 = expand_bbox(g1, ZoomGroup.G2, mask.shape)
        g3 = expand_bbox(g1, ZoomGroup.G3, mask.shape)
        assert g3.top <= g2.top and g3.left <= g2.left
        assert g3.bottom >= g2.bottom and g3.right >= g2.right


def test_bounding_box_nominal_extent():
    box = BoundingBox(center_row=50.0, center_col=50.0, height=10.0, width=20.0,
                      top=45, left=40, bottom=55, right=60)
    assert box.nominal_extent() == (45.0, 55.0, 40.0, 60.0)
    assert box.clamped_area == 10 * 20
