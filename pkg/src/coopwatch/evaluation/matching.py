"""Prediction-to-ground-truth matching over an IoU threshold grid."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from coopwatch.geometry import BoundingBox, Detection, iou

# 0.50, 0.55, ..., 0.95 built from exact decimals.
COCO_IOU_GRID: tuple[float, ...] = tuple((50 + 5 * i) / 100 for i in range(10))


@dataclass(frozen=True)
class GroundTruth:
    box: BoundingBox
    class_id: int


@dataclass(frozen=True)
class MatchedDetection:
    detection: Detection
    image_id: str
    tp_flags: tuple[bool, ...]
    matched_gt_index: int | None = None
    matched_iou: float = 0.0

    @property
    def confidence(self) -> float:
        return self.detection.confidence

    @property
    def class_id(self) -> int:
        return self.detection.class_id


def check_iou_grid(iou_grid: Sequence[float]) -> None:
    if not iou_grid:
        raise ValueError("iou grid is empty")
    if any(not (0.0 < t <= 1.0) for t in iou_grid):
        raise ValueError("iou thresholds must lie in (0, 1]")
    if any(b <= a for a, b in zip(iou_grid, iou_grid[1:])):
        raise ValueError("iou grid must be strictly increasing")


def image_order(preds: Sequence[Detection]) -> list[int]:
    """Indices of ``preds`` by confidence desc, x_min asc, input order."""
    return sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, preds[i].box.x_min, i))


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_grid: Sequence[float] = COCO_IOU_GRID,
    image_id: str = "",
) -> tuple[list[MatchedDetection], Counter]:
    """Greedy matching for one image.

    Predictions are visited by descending confidence; each takes the
    unmatched same-class ground truth with the highest IoU, provided that IoU
    reaches the lowest grid threshold. The match is made once and a
    prediction is a true positive at threshold ``t`` iff its matched IoU is
    at least ``t``. This keeps the flags non-increasing along the grid, which
    re-running greedy assignment separately at every threshold does not.

    Returns matched predictions in visiting order and the ground-truth count
    per class.
    """
    check_iou_grid(iou_grid)
    floor = iou_grid[0]
    taken = [False] * len(gts)
    out = []
    for i in image_order(preds):
        det = preds[i]
        best, best_iou = None, -1.0
        for j, gt in enumerate(gts):
            if taken[j] or gt.class_id != det.class_id:
                continue
            v = iou(det.box, gt.box)
            if v >= floor and v > best_iou:
                best, best_iou = j, v
        if best is None:
            out.append(MatchedDetection(det, image_id, (False,) * len(iou_grid)))
            continue
        taken[best] = True
        flags = tuple(best_iou >= t for t in iou_grid)
        out.append(MatchedDetection(det, image_id, flags, best, best_iou))
    return out, Counter(gt.class_id for gt in gts)
