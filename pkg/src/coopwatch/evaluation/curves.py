"""Precision / recall / F1 as functions of the confidence threshold."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from coopwatch.evaluation.matching import MatchedDetection

# 0.000, 0.001, ..., 1.000
DEFAULT_CONFIDENCE_GRID = np.arange(1001) / 1000


@dataclass(frozen=True)
class ConfidenceCurve:
    kind: str  # "precision" | "recall" | "f1"
    grid: np.ndarray
    per_class: dict[int, np.ndarray]
    all_classes: np.ndarray


@dataclass(frozen=True)
class BestF1:
    confidence: float
    f1: float
    precision: float
    recall: float


def check_confidence_grid(grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("confidence grid must be a non-empty 1-D sequence")
    if grid[0] < 0.0 or grid[-1] > 1.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("confidence grid must be strictly increasing in [0, 1]")


def f1_score(precision: np.ndarray, recall: np.ndarray) -> np.ndarray:
    precision = np.asarray(precision, dtype=float)
    recall = np.asarray(recall, dtype=float)
    total = precision + recall
    out = np.zeros(np.broadcast(precision, recall).shape)
    np.divide(2 * precision * recall, total, out=out, where=total > 0)
    return out


def _counts_at_or_above(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    ordered = np.sort(values)
    return len(ordered) - np.searchsorted(ordered, grid, side="left")


def _series(tp_conf: np.ndarray, all_conf: np.ndarray, n_gt: int, grid: np.ndarray):
    n_tp = _counts_at_or_above(tp_conf, grid).astype(float)
    n_det = _counts_at_or_above(all_conf, grid).astype(float)
    precision = np.where(n_det > 0, n_tp / np.maximum(n_det, 1.0), 1.0)
    recall = n_tp / n_gt if n_gt > 0 else np.zeros_like(n_tp)
    return precision, recall


def confidence_sweep(
    matched: Sequence[MatchedDetection],
    n_gt: Mapping[int, int],
    grid: Sequence[float] | np.ndarray = DEFAULT_CONFIDENCE_GRID,
    class_ids: Sequence[int] | None = None,
    flag_index: int = 0,
) -> tuple[dict[str, ConfidenceCurve], BestF1]:
    """Sweep the confidence threshold over ``grid``.

    At each threshold ``c`` only detections with confidence >= c count.
    Precision is 1.0 when nothing survives. The all-class series pools the
    counts of every class. The best-F1 point is the argmax of the all-class
    F1 series, taking the smallest ``c`` on ties.
    """
    grid = np.asarray(grid, dtype=float)
    check_confidence_grid(grid)
    if class_ids is None:
        class_ids = sorted(set(n_gt) | {m.class_id for m in matched})
    conf = np.array([m.confidence for m in matched], dtype=float)
    cls = np.array([m.class_id for m in matched], dtype=int)
    tp = np.array([m.tp_flags[flag_index] for m in matched], dtype=bool)

    per = {"precision": {}, "recall": {}, "f1": {}}
    for c in class_ids:
        sel = cls == c
        p, r = _series(conf[sel & tp], conf[sel], n_gt.get(c, 0), grid)
        per["precision"][c], per["recall"][c], per["f1"][c] = p, r, f1_score(p, r)
    known = np.isin(cls, list(class_ids))
    total_gt = sum(n_gt.get(c, 0) for c in class_ids)
    p_all, r_all = _series(conf[known & tp], conf[known], total_gt, grid)
    f1_all = f1_score(p_all, r_all)

    curves = {
        "precision": ConfidenceCurve("precision", grid, per["precision"], p_all),
        "recall": ConfidenceCurve("recall", grid, per["recall"], r_all),
        "f1": ConfidenceCurve("f1", grid, per["f1"], f1_all),
    }
    i = int(np.argmax(f1_all))
    best = BestF1(float(grid[i]), float(f1_all[i]), float(p_all[i]), float(r_all[i]))
    return curves, best
