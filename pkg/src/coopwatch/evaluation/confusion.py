"""Detection confusion matrix with a background row and column."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from coopwatch.evaluation.matching import GroundTruth, image_order
from coopwatch.geometry import Detection, iou


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are predicted classes, columns true classes; index K is background."""

    matrix: np.ndarray
    class_names: tuple[str, ...]
    conf_threshold: float
    iou_threshold: float

    @property
    def background(self) -> int:
        return len(self.class_names)

    def cell(self, predicted: int | str, true: int | str) -> int:
        return int(self.matrix[self._index(predicted), self._index(true)])

    def _index(self, key: int | str) -> int:
        if isinstance(key, str):
            return self.background if key == "background" else self.class_names.index(key)
        return key

    def to_csv(self) -> str:
        labels = [*self.class_names, "background"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(["predicted \\ true", *labels])
        for name, row in zip(labels, self.matrix.tolist()):
            writer.writerow([name, *row])
        return buf.getvalue()


def _match_image(
    preds: Sequence[Detection], gts: Sequence[GroundTruth], iou_threshold: float
) -> tuple[list[tuple[int, int]], set[int], set[int]]:
    order = image_order(preds)
    rank = {p: r for r, p in enumerate(order)}
    pairs = []
    for i in order:
        for j, gt in enumerate(gts):
            v = iou(preds[i].box, gt.box)
            if v >= iou_threshold:
                pairs.append((-v, rank[i], j, i))
    pairs.sort()
    used_p, used_g, matched = set(), set(), []
    for _, _, j, i in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matched.append((i, j))
    return matched, set(range(len(preds))) - used_p, set(range(len(gts))) - used_g


def confusion_matrix(
    preds: Mapping[str, Sequence[Detection]],
    gts: Mapping[str, Sequence[GroundTruth]],
    class_names: Sequence[str],
    conf_threshold: float = 0.25,
    iou_threshold: float = 0.45,
) -> ConfusionMatrix:
    """Class-agnostic spatial matching, highest IoU first, each box used once."""
    for name, t in (("conf_threshold", conf_threshold), ("iou_threshold", iou_threshold)):
        if not (0.0 < t <= 1.0):
            raise ValueError(f"{name} must lie in (0, 1]")
    k = len(class_names)
    m = np.zeros((k + 1, k + 1), dtype=np.int64)
    for image_id in sorted(set(preds) | set(gts)):
        kept = [d for d in preds.get(image_id, ()) if d.confidence >= conf_threshold]
        truth = list(gts.get(image_id, ()))
        matched, lone_preds, lone_gts = _match_image(kept, truth, iou_threshold)
        for i, j in matched:
            m[kept[i].class_id, truth[j].class_id] += 1
        for i in lone_preds:
            m[kept[i].class_id, k] += 1
        for j in lone_gts:
            m[k, truth[j].class_id] += 1
    return ConfusionMatrix(m, tuple(class_names), conf_threshold, iou_threshold)
