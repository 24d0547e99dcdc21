import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopwatch.evaluation import (
    COCO_IOU_GRID,
    EvalConfig,
    GroundTruth,
    MatchedDetection,
    average_precision,
    confidence_sweep,
    confusion_matrix,
    evaluate,
    exact_average_precision,
    f1_score,
    match_detections,
    rank,
    render_report,
    write_report,
)
from coopwatch.evaluation.io import dump_detections, load_detections
from coopwatch.evaluation.metrics import ClassMetrics, macro_average
from coopwatch.evaluation.report import pr_curve_csv
from coopwatch.geometry import BoundingBox, Detection
from oracles import enumerate_matching, rectangle_ap

NAMES = ("Fowl Pox", "Healthy", "Infectious Coryza", "Newcastle Disease")


def det(x0, y0, x1, y1, cls=0, conf=0.9):
    return Detection(BoundingBox(x0, y0, x1, y1), cls, conf)


def gt(x0, y0, x1, y1, cls=0):
    return GroundTruth(BoundingBox(x0, y0, x1, y1), cls)


def ranked_flags(flags, image_id="a"):
    """MatchedDetections with descending confidence carrying the given flags."""
    n = len(flags)
    return [
        MatchedDetection(det(i, 0, i + 1, 1, 0, 1.0 - i / (n + 1)), image_id, (bool(f),))
        for i, f in enumerate(flags)
    ]


# --- matching ----------------------------------------------------------------


def test_match_single_hit_and_miss():
    out, counts = match_detections([det(0, 0, 10, 10)], [gt(0, 0, 10, 10)], (0.5,))
    assert out[0].tp_flags == (True,) and out[0].matched_gt_index == 0
    assert counts == {0: 1}
    out, _ = match_detections([det(0, 0, 10, 10, cls=1)], [gt(0, 0, 10, 10)], (0.5,))
    assert out[0].tp_flags == (False,)


def test_match_duplicate_is_false_positive():
    preds = [det(0, 0, 10, 10, conf=0.8), det(0, 0, 10, 9, conf=0.9)]
    out, _ = match_detections(preds, [gt(0, 0, 10, 10)], (0.5,))
    # the higher-confidence prediction is visited first and takes the box
    assert [m.confidence for m in out] == [0.9, 0.8]
    assert [m.tp_flags[0] for m in out] == [True, False]


def test_match_picks_highest_iou_gt():
    out, _ = match_detections([det(0, 0, 10, 10)], [gt(0, 0, 10, 14), gt(0, 0, 10, 11)], (0.5,))
    assert out[0].matched_gt_index == 1


def test_match_flags_follow_matched_iou():
    # IoU 0.8 is a hit up to 0.80 and a miss above
    out, _ = match_detections([det(0, 0, 10, 8)], [gt(0, 0, 10, 10)])
    assert out[0].tp_flags == tuple(t <= 0.8 for t in COCO_IOU_GRID)


@pytest.mark.parametrize("grid", [(), (0.5, 0.5), (0.0, 0.5), (0.6, 0.5), (0.5, 1.1)])
def test_match_rejects_bad_grid(grid):
    with pytest.raises(ValueError):
        match_detections([], [], grid)


coords = st.integers(0, 12)


@st.composite
def scenes(draw):
    def box():
        x0, y0 = draw(coords), draw(coords)
        return [x0, y0, x0 + draw(st.integers(2, 8)), y0 + draw(st.integers(2, 8))]

    gts = [(box(), draw(st.integers(0, 1))) for _ in range(draw(st.integers(0, 3)))]
    preds = [(box(), draw(st.integers(0, 1)), draw(st.sampled_from([0.2, 0.5, 0.8])))
             for _ in range(draw(st.integers(0, 4)))]
    return preds, gts


@settings(max_examples=150)
@given(scenes(), st.sampled_from([0.3, 0.5, 0.7]))
def test_greedy_matching_equals_exhaustive_priority_search(scene, thr):
    preds, gts = scene
    dets = [Detection(BoundingBox(*b), c, p) for b, c, p in preds]
    truth = [GroundTruth(BoundingBox(*b), c) for b, c in gts]
    out, _ = match_detections(dets, truth, (thr,))
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][2], preds[i][0][0], i))
    expected = enumerate_matching([preds[i] for i in order], gts, thr)
    assert [m.matched_gt_index for m in out] == expected


# --- average precision -------------------------------------------------------


def test_ap_single_true_positive():
    assert average_precision(ranked_flags([1]), 1) == 1.0


def test_ap_tp_fp_tp():
    r = ranked_flags([1, 0, 1])
    assert exact_average_precision(r, 2) == pytest.approx(5 / 6)
    assert float(rectangle_ap([1, 0, 1], 2)) == pytest.approx(5 / 6)
    assert average_precision(r, 2) == pytest.approx(5 / 6, abs=0.01)


def test_ap_degenerate_cases():
    assert average_precision(ranked_flags([0, 0]), 3) == 0.0
    assert average_precision([], 3) == 0.0
    assert math.isnan(average_precision([], 0))
    assert average_precision(ranked_flags([0]), 0) == 0.0
    with pytest.raises(ValueError):
        average_precision([], -1)


def test_ap_rejects_unranked_input():
    r = ranked_flags([1, 0, 1])
    with pytest.raises(ValueError, match="not ranked"):
        average_precision([r[1], r[0], r[2]], 2)


def test_rank_orders_by_confidence_then_image_then_x():
    a = MatchedDetection(det(5, 0, 6, 1, conf=0.5), "b", (True,))
    b = MatchedDetection(det(1, 0, 2, 1, conf=0.5), "b", (True,))
    c = MatchedDetection(det(9, 0, 10, 1, conf=0.5), "a", (True,))
    d = MatchedDetection(det(9, 0, 10, 1, conf=0.7), "z", (True,))
    assert rank([a, b, c, d]) == [d, c, b, a]


@given(st.lists(st.booleans(), min_size=1, max_size=30), st.integers(0, 10))
def test_ap_bounded_and_matches_rectangle_oracle(flags, extra):
    n_gt = sum(flags) + extra
    if n_gt == 0:
        return
    r = ranked_flags(flags)
    ap = average_precision(r, n_gt)
    assert 0.0 <= ap <= 1.0
    assert exact_average_precision(r, n_gt) == pytest.approx(float(rectangle_ap(flags, n_gt)), abs=1e-9)


@settings(max_examples=100)
@given(
    st.lists(st.tuples(st.floats(0.01, 1.0), st.booleans()), min_size=1, max_size=20),
    st.integers(0, 5),
    st.floats(0.05, 1.0),
)
def test_ap_invariant_under_monotone_confidence_rescaling(items, extra, scale):
    n_gt = sum(f for _, f in items) + extra
    if n_gt == 0:
        return

    def build(transform):
        ms = [
            MatchedDetection(det(i, 0, i + 1, 1, conf=transform(c)), "img", (f,))
            for i, (c, f) in enumerate(items)
        ]
        return rank(ms)

    a = average_precision(build(lambda c: c), n_gt)
    b = average_precision(build(lambda c: c * scale), n_gt)
    # equal confidences stay equal, so the x_min tie-break keeps the order
    assert a == pytest.approx(b, abs=1e-12)


# --- confidence sweep --------------------------------------------------------


def test_confidence_sweep_examples():
    matched = [
        MatchedDetection(det(0, 0, 1, 1, conf=0.9), "a", (True,)),
        MatchedDetection(det(2, 0, 3, 1, conf=0.6), "a", (False,)),
        MatchedDetection(det(4, 0, 5, 1, conf=0.3), "a", (True,)),
    ]
    grid = np.array([0.0, 0.3, 0.5, 0.95])
    curves, best = confidence_sweep(matched, {0: 2}, grid, [0])
    np.testing.assert_allclose(curves["precision"].per_class[0], [2 / 3, 2 / 3, 1 / 2, 1.0])
    np.testing.assert_allclose(curves["recall"].per_class[0], [1.0, 1.0, 0.5, 0.0])
    np.testing.assert_allclose(curves["f1"].all_classes, [0.8, 0.8, 0.5, 0.0])
    # tie at 0.0 and 0.3: the smaller threshold wins
    assert best.confidence == 0.0 and best.f1 == pytest.approx(0.8)


def test_confidence_sweep_pools_classes():
    matched = [
        MatchedDetection(det(0, 0, 1, 1, 0, 0.9), "a", (True,)),
        MatchedDetection(det(0, 0, 1, 1, 1, 0.9), "a", (False,)),
    ]
    curves, _ = confidence_sweep(matched, {0: 1, 1: 3}, np.array([0.5]), [0, 1])
    assert curves["precision"].all_classes[0] == 0.5
    assert curves["recall"].all_classes[0] == 0.25


def test_confidence_sweep_rejects_bad_grid():
    with pytest.raises(ValueError):
        confidence_sweep([], {0: 1}, np.array([0.5, 0.4]))


def test_f1_zero_when_both_zero():
    np.testing.assert_array_equal(f1_score([0.0, 1.0], [0.0, 1.0]), [0.0, 1.0])


# --- confusion matrix --------------------------------------------------------


def test_confusion_matrix_examples():
    preds = {
        "a": [det(0, 0, 10, 10, 0, 0.9), det(50, 50, 60, 60, 2, 0.9), det(80, 80, 90, 90, 3, 0.1)],
        "b": [],
    }
    gts = {"a": [gt(0, 0, 10, 10, 1)], "b": [gt(0, 0, 5, 5, 3)]}
    cm = confusion_matrix(preds, gts, NAMES)
    # Fowl Pox predicted on a Healthy bird
    assert cm.cell("Fowl Pox", "Healthy") == 1
    assert cm.cell("Infectious Coryza", "background") == 1
    assert cm.cell("background", "Newcastle Disease") == 1
    # below the 0.25 confidence cut: not counted anywhere
    assert cm.matrix.sum() == 3
    assert cm.matrix[:, :4].sum(axis=0).tolist() == [0, 1, 0, 1]


def test_confusion_matrix_highest_iou_first():
    preds = {"a": [det(0, 0, 10, 8, 1, 0.9), det(0, 0, 10, 10, 2, 0.5)]}
    gts = {"a": [gt(0, 0, 10, 10, 2)]}
    cm = confusion_matrix(preds, gts, NAMES)
    # the lower-confidence prediction overlaps perfectly and takes the box
    assert cm.cell(2, 2) == 1 and cm.cell(1, "background") == 1


def test_confusion_matrix_csv():
    cm = confusion_matrix({"a": []}, {"a": [gt(0, 0, 1, 1, 0)]}, NAMES)
    lines = cm.to_csv().split("\r\n")
    assert lines[0] == "predicted \\ true,Fowl Pox,Healthy,Infectious Coryza,Newcastle Disease,background"
    assert lines[5] == "background,1,0,0,0,0"


def test_confusion_matrix_rejects_thresholds():
    with pytest.raises(ValueError):
        confusion_matrix({}, {}, NAMES, conf_threshold=0.0)


# --- full evaluation and report ---------------------------------------------


def _small_dataset():
    preds = {
        "a": [det(0, 0, 10, 10, 0, 0.9), det(20, 20, 30, 30, 0, 0.2)],
        "b": [det(0, 0, 10, 10, 1, 0.8)],
    }
    gts = {"a": [gt(0, 0, 10, 10, 0)], "b": [gt(0, 0, 10, 10, 1), gt(40, 40, 50, 50, 1)]}
    return preds, gts


def test_evaluate_small_dataset():
    preds, gts = _small_dataset()
    result = evaluate(preds, gts, NAMES)
    fp, healthy, coryza, nd = result.per_class
    assert (fp.precision, fp.recall, fp.ap50, fp.ap50_95) == (1.0, 1.0, 1.0, 1.0)
    assert (healthy.precision, healthy.recall) == (1.0, 0.5)
    assert healthy.ap50 == pytest.approx(51 / 101)
    assert not coryza.defined and not nd.defined
    assert result.overall.map50 == pytest.approx((1 + 51 / 101) / 2)
    assert result.overall.recall == pytest.approx(0.75)


def test_evaluate_errors():
    with pytest.raises(ValueError, match="nothing to evaluate"):
        evaluate({"a": [det(0, 0, 1, 1)]}, {"a": []}, NAMES)
    with pytest.raises(ValueError, match="unknown class_id 7"):
        evaluate({"a": [det(0, 0, 1, 1, 7)]}, {"a": [gt(0, 0, 1, 1)]}, NAMES)
    with pytest.raises(ValueError):
        EvalConfig(iou_grid=(0.55, 0.6))


def test_macro_average_skips_undefined():
    rows = [
        ClassMetrics(0, 0.5, 0.5, 0.5, 0.5),
        ClassMetrics(1, math.nan, math.nan, math.nan, math.nan),
        ClassMetrics(2, 1.0, 1.0, 1.0, 0.0),
    ]
    o = macro_average(rows)
    assert (o.precision, o.recall, o.map50, o.map50_95) == (0.75, 0.75, 0.75, 0.25)
    assert math.isnan(macro_average(rows[1:2]).map50)


def test_render_report_uses_na_for_undefined():
    preds, gts = _small_dataset()
    result = evaluate(preds, gts, NAMES)
    text = render_report(result.per_class, result.overall, NAMES, result.best_f1)
    assert "PER-CLASS PERFORMANCE" in text and "OVERALL PERFORMANCE (ALL CLASSES)" in text
    coryza_line = next(line for line in text.splitlines() if line.startswith("Infectious Coryza"))
    assert coryza_line.split()[-4:] == ["n/a"] * 4
    assert "Fowl Pox           1.000      1.000   1.000    1.000" in text


def test_write_report_files(tmp_path):
    preds, gts = _small_dataset()
    result = evaluate(preds, gts, NAMES)
    cm = confusion_matrix(preds, gts, NAMES)
    written = write_report(tmp_path, result, NAMES, cm)
    assert sorted(p.name for p in written) == [
        "confusion_matrix.csv",
        "f1_confidence.csv",
        "metrics.json",
        "precision_confidence.csv",
        "precision_recall.csv",
        "recall_confidence.csv",
        "report.txt",
    ]
    rows = (tmp_path / "f1_confidence.csv").read_bytes().split(b"\r\n")
    assert len([r for r in rows if r]) == 1 + 1001
    pr = pr_curve_csv(result, NAMES).split("\r\n")
    assert len([r for r in pr if r]) == 1 + 101
    mean_col = [float(r.split(",")[-1]) for r in pr[1:] if r]
    assert np.mean(mean_col) == pytest.approx(result.overall.map50, abs=1e-5)


def test_detection_io_round_trip(tmp_path):
    preds, _ = _small_dataset()
    path = tmp_path / "dets.jsonl"
    path.write_text(dump_detections(preds))
    assert load_detections(path) == preds
    path.write_text('{"image_id": "a", "class_id": 0}\n')
    with pytest.raises(ValueError, match="line 1"):
        load_detections(path)


# --- further worked examples and invariants ----------------------------------


def test_exact_cover_is_tp_at_every_threshold():
    out, _ = match_detections([det(3, 3, 9, 9)], [gt(3, 3, 9, 9)])
    assert out[0].tp_flags == (True,) * 10


def test_two_predictions_over_one_gt_at_iou_07():
    g = gt(0, 0, 10, 10)
    a, b = det(0, 0, 10, 7, conf=0.9), det(0, 3, 10, 10, conf=0.8)
    out, _ = match_detections([b, a], [g], (0.5,))
    assert [(m.confidence, m.tp_flags[0]) for m in out] == [(0.9, True), (0.8, False)]
    assert enumerate_matching([(a.box.as_list(), 0, 0.9), (b.box.as_list(), 0, 0.8)], [(g.box.as_list(), 0)], 0.5) == [0, None]


def test_confusion_matrix_worked_examples():
    cm = confusion_matrix({"a": [det(0, 0, 10, 9, 1, 0.9)]}, {"a": [gt(0, 0, 10, 10, 0)]}, NAMES)
    expected = np.zeros((5, 5), dtype=int)
    expected[1, 0] = 1
    assert np.array_equal(cm.matrix, expected)
    assert cm.cell("Healthy", "Fowl Pox") == 1

    perfect = confusion_matrix(
        {"a": [det(0, 0, 5, 5, 0, 0.9), det(20, 20, 30, 30, 3, 0.9)]},
        {"a": [gt(0, 0, 5, 5, 0), gt(20, 20, 30, 30, 3)]},
        NAMES,
    )
    assert np.array_equal(perfect.matrix, np.diag([1, 0, 0, 1, 0]))

    lone = confusion_matrix({"a": [det(0, 0, 5, 5, 2, 0.9)]}, {"a": []}, NAMES)
    assert lone.cell(2, "background") == 1 and lone.matrix.sum() == 1
    assert lone.cell("background", "background") == 0


def test_single_true_positive_sweep():
    matched = [MatchedDetection(det(0, 0, 1, 1, conf=0.9), "a", (True,))]
    curves, _ = confidence_sweep(matched, {0: 1})
    grid = curves["recall"].grid
    assert (curves["precision"].per_class[0] == 1.0).all()
    np.testing.assert_array_equal(curves["recall"].per_class[0], (grid <= 0.9).astype(float))


def test_f1_half_half():
    assert f1_score(0.5, 0.5) == pytest.approx(0.5)


@st.composite
def sweep_inputs(draw):
    items = draw(st.lists(st.tuples(st.integers(0, 2), st.floats(0, 1), st.booleans()), max_size=25))
    matched = [
        MatchedDetection(det(i, 0, i + 1, 1, cls, conf), "a", (tp,))
        for i, (cls, conf, tp) in enumerate(items)
    ]
    n_gt = {c: sum(1 for cc, _, tp in items if cc == c and tp) + draw(st.integers(0, 3)) for c in range(3)}
    return matched, n_gt


@settings(max_examples=100)
@given(sweep_inputs())
def test_sweep_invariants(inputs):
    matched, n_gt = inputs
    grid = np.arange(101) / 100
    curves, best = confidence_sweep(matched, n_gt, grid, [0, 1, 2])
    for c in [0, 1, 2, None]:
        pick = (lambda k: curves[k].all_classes) if c is None else (lambda k: curves[k].per_class[c])
        p, r, f = pick("precision"), pick("recall"), pick("f1")
        assert ((0 <= p) & (p <= 1) & (0 <= r) & (r <= 1)).all()
        assert (np.diff(r) <= 1e-12).all()
        total = p + r
        expect = np.where(total > 0, 2 * p * r / np.where(total > 0, total, 1), 0.0)
        np.testing.assert_allclose(f, expect, atol=1e-12)
    tp_all = sum(m.tp_flags[0] for m in matched)
    total_gt = sum(n_gt.values())
    assert curves["recall"].all_classes[0] == (tp_all / total_gt if total_gt else 0.0)
    assert best.f1 == curves["f1"].all_classes.max()


@given(st.lists(st.tuples(*[st.floats(0, 1)] * 4), min_size=1, max_size=8))
def test_macro_average_is_column_mean(rows):
    o = macro_average([ClassMetrics(i, *r) for i, r in enumerate(rows)])
    for k, v in enumerate((o.precision, o.recall, o.map50, o.map50_95)):
        assert v == pytest.approx(sum(r[k] for r in rows) / len(rows), abs=1e-9)
