"""Per-class and macro-averaged detection metrics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from coopwatch.evaluation.ap import PRCurve, average_precision, pr_curve, rank
from coopwatch.evaluation.curves import (
    DEFAULT_CONFIDENCE_GRID,
    BestF1,
    ConfidenceCurve,
    confidence_sweep,
)
from coopwatch.evaluation.matching import (
    COCO_IOU_GRID,
    GroundTruth,
    MatchedDetection,
    check_iou_grid,
    match_detections,
)
from coopwatch.geometry import Detection


@dataclass(frozen=True)
class EvalConfig:
    iou_grid: tuple[float, ...] = COCO_IOU_GRID
    confidence_grid: np.ndarray = field(default_factory=lambda: DEFAULT_CONFIDENCE_GRID)
    report_conf_threshold: float = 0.25

    def __post_init__(self) -> None:
        check_iou_grid(self.iou_grid)
        if 0.5 not in self.iou_grid:
            raise ValueError("iou grid must contain 0.5")
        if not (0.0 <= self.report_conf_threshold <= 1.0):
            raise ValueError("report_conf_threshold outside [0, 1]")

    @property
    def index50(self) -> int:
        return self.iou_grid.index(0.5)


@dataclass(frozen=True)
class ClassMetrics:
    """One row of the per-class report. ``nan`` marks an undefined value."""

    class_id: int
    precision: float
    recall: float
    ap50: float
    ap50_95: float
    n_gt: int = 0
    n_pred: int = 0

    @property
    def defined(self) -> bool:
        return not math.isnan(self.ap50)


@dataclass(frozen=True)
class OverallMetrics:
    precision: float
    recall: float
    map50: float
    map50_95: float


@dataclass
class EvaluationResult:
    per_class: list[ClassMetrics]
    overall: OverallMetrics
    pr_curves: dict[tuple[int, float], PRCurve]
    confidence_curves: dict[str, ConfidenceCurve]
    best_f1: BestF1
    config: EvalConfig


def macro_average(per_class: Sequence[ClassMetrics]) -> OverallMetrics:
    """Unweighted mean of each column over classes with a defined AP."""
    rows = [m for m in per_class if m.defined]
    if not rows:
        nan = math.nan
        return OverallMetrics(nan, nan, nan, nan)

    def mean(attr: str) -> float:
        return math.fsum(getattr(m, attr) for m in rows) / len(rows)

    return OverallMetrics(mean("precision"), mean("recall"), mean("ap50"), mean("ap50_95"))


def match_dataset(
    preds: Mapping[str, Sequence[Detection]],
    gts: Mapping[str, Sequence[GroundTruth]],
    iou_grid: Sequence[float] = COCO_IOU_GRID,
) -> tuple[list[MatchedDetection], Counter]:
    matched: list[MatchedDetection] = []
    n_gt: Counter = Counter()
    for image_id in sorted(set(preds) | set(gts)):
        m, counts = match_detections(preds.get(image_id, ()), gts.get(image_id, ()), iou_grid, image_id)
        matched.extend(m)
        n_gt.update(counts)
    return matched, n_gt


def _class_row(
    class_id: int, ranked: list[MatchedDetection], n_gt: int, cfg: EvalConfig
) -> ClassMetrics:
    aps = [average_precision(ranked, n_gt, k) for k in range(len(cfg.iou_grid))]
    ap50 = aps[cfg.index50]
    if math.isnan(ap50):
        return ClassMetrics(class_id, math.nan, math.nan, math.nan, math.nan, 0, 0)
    kept = [m for m in ranked if m.confidence >= cfg.report_conf_threshold]
    tp = sum(m.tp_flags[cfg.index50] for m in kept)
    precision = tp / len(kept) if kept else 1.0
    recall = tp / n_gt if n_gt else 0.0
    return ClassMetrics(
        class_id, precision, recall, ap50, float(np.mean(aps)), n_gt, len(ranked)
    )


def evaluate(
    preds: Mapping[str, Sequence[Detection]],
    gts: Mapping[str, Sequence[GroundTruth]],
    class_names: Sequence[str],
    config: EvalConfig | None = None,
) -> EvaluationResult:
    """Full metric suite over a dataset.

    ``preds`` and ``gts`` map image ids to that image's detections and
    ground-truth boxes. Class ids outside ``class_names`` are rejected.
    """
    cfg = config or EvalConfig()
    k = len(class_names)
    for source, table in (("prediction", preds), ("ground truth", gts)):
        for image_id, items in table.items():
            for item in items:
                if not (0 <= item.class_id < k):
                    raise ValueError(f"{source} in {image_id!r} has unknown class_id {item.class_id}")
    matched, n_gt = match_dataset(preds, gts, cfg.iou_grid)
    if sum(n_gt.values()) == 0:
        raise ValueError("nothing to evaluate: no ground truth for any class")

    by_class: dict[int, list[MatchedDetection]] = {c: [] for c in range(k)}
    for m in matched:
        by_class[m.class_id].append(m)
    per_class, curves = [], {}
    for c in range(k):
        ranked = rank(by_class[c])
        per_class.append(_class_row(c, ranked, n_gt[c], cfg))
        for idx, t in enumerate(cfg.iou_grid):
            curves[(c, t)] = pr_curve(ranked, n_gt[c], idx, class_id=c, iou_threshold=t)

    conf_curves, best = confidence_sweep(
        matched, dict(n_gt), cfg.confidence_grid, list(range(k)), cfg.index50
    )
    return EvaluationResult(per_class, macro_average(per_class), curves, conf_curves, best, cfg)
