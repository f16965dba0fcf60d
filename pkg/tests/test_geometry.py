import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcmvrd.core import BoundingBox, Track
from hcmvrd.geometry import iou, mean_iou, pair_spatial, rel_spatial, volume_iou
from hcmvrd.oracles import pixel_iou, volume_iou_frames

from conftest import track


def box(x0, y0, x1, y1):
    return BoundingBox(x0, y0, x1, y1)


coord = st.floats(-50, 50, allow_nan=False)
size = st.floats(0.5, 40, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(size), draw(size)
    return BoundingBox(x, y, x + w, y + h)


def test_iou_basic_cases():
    a = box(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, box(20, 20, 30, 30)) == 0.0
    assert iou(a, box(10, 0, 20, 10)) == 0.0


def test_half_shifted_box_matches_pixel_count():
    a, b = (0, 0, 10, 10), (5, 0, 15, 10)
    assert pixel_iou(a, b) == pytest.approx(1 / 3, abs=1e-15)
    assert iou(box(*a), box(*b)) == pytest.approx(1 / 3, abs=1e-15)


def test_iou_against_pixel_grid_integer_boxes():
    rng = np.random.default_rng(5)
    for _ in range(200):
        a = rng.integers(0, 30, size=2)
        b = rng.integers(0, 30, size=2)
        ba = (*a, *(a + rng.integers(1, 15, size=2)))
        bb = (*b, *(b + rng.integers(1, 15, size=2)))
        assert iou(box(*ba), box(*bb)) == pytest.approx(pixel_iou(ba, bb), abs=1e-12)


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


def test_mean_iou_examples():
    t = track(0, [[0, 0, 10, 10], [0, 0, 10, 10]])
    u = track(0, [[5, 0, 15, 10], [0, 0, 10, 10]])
    assert mean_iou(t, t) == 1.0
    assert mean_iou(t, u) == pytest.approx(2 / 3, abs=1e-15)
    assert mean_iou(t, track(5, [[0, 0, 10, 10]])) == 0.0


def test_volume_iou_examples():
    a = track(0, [[0, 0, 1, 1]] * 2)
    b = track(1, [[0, 0, 1, 1]] * 2)
    assert volume_iou(a, a) == 1.0
    assert volume_iou(a, b) == pytest.approx(1 / 3, abs=1e-15)
    assert volume_iou_frames(a, b) == pytest.approx(1 / 3, abs=1e-15)
    assert volume_iou(a, track(4, [[0, 0, 1, 1]])) == 0.0
    # restricted to the shared frame the two tracks coincide
    assert volume_iou(a, b, overlap_only=True) == 1.0


@st.composite
def tracks(draw):
    start = draw(st.integers(0, 6))
    n = draw(st.integers(1, 6))
    return Track(np.arange(start, start + n), [draw(boxes()).as_array() for _ in range(n)])


@settings(max_examples=60)
@given(tracks(), tracks())
def test_volume_iou_matches_frame_walk(a, b):
    assert volume_iou(a, b) == pytest.approx(volume_iou_frames(a, b), abs=1e-12)
    assert volume_iou(a, b, overlap_only=True) == pytest.approx(volume_iou_frames(a, b, shared_only=True), abs=1e-12)
    assert volume_iou(a, b) == pytest.approx(volume_iou(b, a), abs=1e-15)
    assert 0.0 <= mean_iou(a, b) <= 1.0


@settings(max_examples=40)
@given(tracks(), st.floats(0.5, 3.0))
def test_mean_and_volume_iou_agree_on_uniform_overlap(a, scale):
    # same frames, identical per-frame IoU: scale every box about its corner
    boxes_b = a.boxes.copy()
    boxes_b[:, 2:] = a.boxes[:, :2] + (a.boxes[:, 2:] - a.boxes[:, :2]) * scale
    b = Track(a.frames, boxes_b)
    assert mean_iou(a, b) == pytest.approx(volume_iou(a, b), rel=1e-9)


def test_rel_spatial_hand_example():
    i = box(10 - 15, 20 - 20, 10 + 15, 20 + 20)
    j = box(-5, -10, 5, 10)
    np.testing.assert_allclose(rel_spatial(i, j), [1.0, 1.0, math.log(3), math.log(2), math.log(6)], rtol=0, atol=1e-15)
    assert np.array_equal(rel_spatial(i, i), np.zeros(5))


@given(boxes(), boxes())
def test_rel_spatial_antisymmetry(a, b):
    f, g = rel_spatial(a, b), rel_spatial(b, a)
    assert np.array_equal(f[2:], -g[2:])
    assert f[4] == f[2] + f[3]
    assert np.all(np.isfinite(f))


def test_rel_spatial_offsets_flip_for_equal_sizes():
    a, b = box(0, 0, 4, 6), box(3, -2, 7, 4)
    np.testing.assert_array_equal(rel_spatial(a, b), -rel_spatial(b, a))


def test_pair_spatial_static_and_moving():
    s = track(0, [[0, 0, 10, 10]] * 4)
    assert np.array_equal(pair_spatial(s, s), np.zeros(10))
    o = track(0, [[0, 0, 10, 10], [0, 0, 10, 10], [0, 0, 10, 10], [5, 0, 15, 10]])
    f = pair_spatial(s, o)
    assert f.shape == (10,)
    moved = f[:5] != f[5:]
    assert moved.tolist() == [True, False, False, False, False]


def test_pair_spatial_needs_overlap():
    with pytest.raises(ValueError, match="no temporal overlap"):
        pair_spatial(track(0, [[0, 0, 1, 1]]), track(3, [[0, 0, 1, 1]]))
