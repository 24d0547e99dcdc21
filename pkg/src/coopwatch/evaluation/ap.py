"""Precision-recall curves and average precision."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from coopwatch.evaluation.matching import MatchedDetection

# {0, 0.01, ..., 1.00}; i/100 so that recall k/n and grid points compare exactly.
RECALL_GRID = np.arange(101) / 100


def rank_key(m: MatchedDetection) -> tuple[float, str, float]:
    return (-m.detection.confidence, m.image_id, m.detection.box.x_min)


def rank(matched: Sequence[MatchedDetection]) -> list[MatchedDetection]:
    """Dataset-wide ranking: confidence desc, image_id asc, x_min asc."""
    return sorted(matched, key=rank_key)


def check_ranked(ranked: Sequence[MatchedDetection]) -> None:
    keys = [rank_key(m) for m in ranked]
    for i, (a, b) in enumerate(zip(keys, keys[1:])):
        if b < a:
            raise ValueError(f"detections are not ranked at position {i + 1}")


@dataclass(frozen=True)
class PRCurve:
    class_id: int
    iou_threshold: float
    recall: np.ndarray
    precision: np.ndarray
    n_gt: int

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))

    def envelope(self) -> np.ndarray:
        """Each precision replaced by the max precision at equal-or-higher recall."""
        if self.precision.size == 0:
            return self.precision
        return np.maximum.accumulate(self.precision[::-1])[::-1]

    def sample(self, grid: np.ndarray = RECALL_GRID) -> np.ndarray:
        """Envelope precision at each recall in ``grid``; 0 beyond the last recall."""
        env = self.envelope()
        idx = np.searchsorted(self.recall, grid, side="left")
        out = np.zeros(len(grid))
        ok = idx < len(env)
        out[ok] = env[idx[ok]]
        return out


def pr_curve(
    ranked: Sequence[MatchedDetection], n_gt: int, flag_index: int = 0,
    class_id: int = -1, iou_threshold: float = 0.5,
) -> PRCurve:
    check_ranked(ranked)
    tp = np.array([m.tp_flags[flag_index] for m in ranked], dtype=float)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_gt if n_gt > 0 else np.zeros_like(ctp)
    precision = ctp / np.maximum(ctp + cfp, 1.0)
    return PRCurve(class_id, iou_threshold, recall, precision, n_gt)


def average_precision(
    ranked: Sequence[MatchedDetection], n_gt: int, flag_index: int = 0
) -> float:
    """101-point interpolated AP for one class at one IoU threshold.

    Returns ``nan`` when there is nothing to score (no ground truth and no
    detections), and 0 when there are detections but no ground truth.
    """
    if n_gt < 0:
        raise ValueError("n_gt must be >= 0")
    check_ranked(ranked)
    if n_gt == 0:
        return math.nan if not ranked else 0.0
    if not ranked:
        return 0.0
    curve = pr_curve(ranked, n_gt, flag_index)
    return float(curve.sample().mean())


def exact_average_precision(
    ranked: Sequence[MatchedDetection], n_gt: int, flag_index: int = 0
) -> float:
    """Area under the precision envelope, integrated step by step in recall."""
    check_ranked(ranked)
    if n_gt == 0:
        return math.nan if not ranked else 0.0
    if not ranked:
        return 0.0
    curve = pr_curve(ranked, n_gt, flag_index)
    env = curve.envelope()
    steps = np.diff(np.concatenate(([0.0], curve.recall)))
    return float(np.sum(steps * env))
