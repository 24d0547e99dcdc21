import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopwatch.geometry import (
    BoundingBox,
    Detection,
    NormalizedBox,
    iou,
    nms,
    norm_to_pixel,
    pixel_to_norm,
)
from oracles import area_iou, raster_iou, reference_nms

coord = st.floats(0, 100, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw, positive=False):
    x0, x1 = sorted((draw(coord), draw(coord)))
    y0, y1 = sorted((draw(coord), draw(coord)))
    if positive and (x1 - x0 < 1e-3 or y1 - y0 < 1e-3):
        x1, y1 = x0 + 1.0, y0 + 1.0
    return BoundingBox(x0, y0, x1, y1)


def test_iou_examples():
    b = BoundingBox(0, 0, 10, 10)
    assert iou(b, b) == 1.0
    assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 6, 6)) == 0.0
    a, c = BoundingBox(0, 0, 2, 2), BoundingBox(1, 0, 3, 2)
    # oracle: count cells of a fine raster
    assert raster_iou(a.as_list(), c.as_list()) == pytest.approx(1 / 3, abs=1e-9)
    assert iou(a, c) == pytest.approx(1 / 3, abs=1e-12)


def test_iou_degenerate_boxes_are_zero():
    p = BoundingBox(3, 3, 3, 3)
    assert iou(p, p) == 0.0
    assert iou(p, BoundingBox(0, 0, 10, 10)) == 0.0


@pytest.mark.parametrize("coords", [(1, 0, 0, 1), (0, 2, 1, 1), (0, 0, math.inf, 1), (math.nan, 0, 1, 1)])
def test_bounding_box_rejects_invalid(coords):
    with pytest.raises(ValueError):
        BoundingBox(*coords)


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(area_iou(a.as_list(), b.as_list()), abs=1e-12)


@given(boxes(positive=True))
def test_iou_self_is_one(a):
    assert iou(a, a) == 1.0


def test_norm_to_pixel_examples():
    assert norm_to_pixel(NormalizedBox(0, 0.5, 0.5, 1, 1), 100, 100) == BoundingBox(0, 0, 100, 100)
    assert norm_to_pixel(NormalizedBox(0, 0.25, 0.25, 0.5, 0.5), 200, 100) == BoundingBox(0, 0, 100, 50)


def test_norm_to_pixel_clips_to_image():
    b = norm_to_pixel(NormalizedBox(0, 0.05, 0.95, 0.2, 0.2), 100, 100)
    assert (b.x_min, b.y_max) == (0.0, 100.0)


def test_pixel_to_norm_examples():
    assert pixel_to_norm(BoundingBox(0, 0, 100, 100), 100, 100) == NormalizedBox(0, 0.5, 0.5, 1, 1)
    assert pixel_to_norm(BoundingBox(0, 0, 100, 50), 200, 100) == NormalizedBox(0, 0.25, 0.25, 0.5, 0.5)


@pytest.mark.parametrize("w,h", [(0, 10), (10, 0), (-5, 10)])
def test_conversions_reject_bad_dimensions(w, h):
    with pytest.raises(ValueError):
        norm_to_pixel(NormalizedBox(0, 0.5, 0.5, 0.1, 0.1), w, h)
    with pytest.raises(ValueError):
        pixel_to_norm(BoundingBox(0, 0, 1, 1), w, h)


@st.composite
def interior_boxes(draw):
    w = draw(st.floats(0.01, 0.9))
    h = draw(st.floats(0.01, 0.9))
    cx = draw(st.floats(w / 2 + 1e-6, 1 - w / 2 - 1e-6))
    cy = draw(st.floats(h / 2 + 1e-6, 1 - h / 2 - 1e-6))
    return NormalizedBox(draw(st.integers(0, 3)), cx, cy, w, h)


@given(interior_boxes(), st.integers(1, 4000), st.integers(1, 4000))
def test_round_trip(n, img_w, img_h):
    back = pixel_to_norm(norm_to_pixel(n, img_w, img_h), img_w, img_h, n.class_id)
    assert back.class_id == n.class_id
    for field in ("cx", "cy", "w", "h"):
        assert getattr(back, field) == pytest.approx(getattr(n, field), abs=1e-9)


def _det(x0, y0, x1, y1, cls, conf):
    return Detection(BoundingBox(x0, y0, x1, y1), cls, conf)


def test_nms_examples():
    single = [_det(0, 0, 10, 10, 0, 0.5)]
    assert nms(single, 0.5) == single
    # IoU of these two is 0.8
    a, b = _det(0, 0, 10, 10, 1, 0.9), _det(0, 0, 10, 8, 1, 0.8)
    assert iou(a.box, b.box) == pytest.approx(0.8)
    assert nms([b, a], 0.5) == [a]
    c = _det(0, 0, 10, 8, 2, 0.8)
    assert nms([a, c], 0.5) == [a, c]
    assert nms([], 0.5) == []


def test_nms_tie_break_is_total():
    a = _det(0, 0, 10, 10, 1, 0.7)
    b = _det(50, 50, 60, 60, 0, 0.7)
    c = _det(80, 80, 90, 90, 0, 0.7)
    assert nms([a, c, b], 0.5) == [c, b, a]


def test_nms_rejects_bad_threshold():
    with pytest.raises(ValueError):
        nms([], 1.5)


@st.composite
def detection_sets(draw):
    n = draw(st.integers(0, 20))
    out = []
    for _ in range(n):
        b = draw(boxes(positive=True))
        out.append(Detection(b, draw(st.integers(0, 2)), draw(st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]))))
    return out


@settings(max_examples=200)
@given(detection_sets(), st.floats(0, 1))
def test_nms_properties(dets, thr):
    kept = nms(dets, thr)
    assert all(k in dets for k in kept)
    for i, a in enumerate(kept):
        for b in kept[i + 1 :]:
            if a.class_id == b.class_id:
                assert iou(a.box, b.box) < thr
    assert nms(kept, thr) == kept
    ref = reference_nms([(d.box.as_list(), d.class_id, d.confidence) for d in dets], thr)
    assert kept == [dets[i] for i in ref]
