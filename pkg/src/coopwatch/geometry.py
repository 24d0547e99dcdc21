"""Box geometry shared by every other module.

Two box formats are used throughout:

- ``BoundingBox``: pixel corners ``(x_min, y_min, x_max, y_max)``, origin top-left.
- ``NormalizedBox``: YOLO label convention ``(class_id, cx, cy, w, h)`` with
  center and size as fractions of the image dimensions.

IoU uses continuous coordinates (no ``+1`` pixel convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "BoundingBox":
        if len(values) != 4:
            raise ValueError(f"box needs 4 coordinates, got {len(values)}")
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class NormalizedBox:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")
        for name in ("cx", "cy"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("w", "h"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name}={v} outside (0, 1]")


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    class_id: int
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 when the union is empty."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def _check_dims(img_w: float, img_h: float) -> None:
    if not (img_w > 0 and img_h > 0):
        raise ValueError(f"image dimensions must be positive, got {img_w}x{img_h}")


def _clip(v: float, hi: float) -> float:
    return min(max(v, 0.0), hi)


def norm_to_pixel(n: NormalizedBox, img_w: float, img_h: float) -> BoundingBox:
    """Convert a YOLO box to pixel corners, clipped to the image."""
    _check_dims(img_w, img_h)
    return BoundingBox(
        _clip((n.cx - n.w / 2) * img_w, img_w),
        _clip((n.cy - n.h / 2) * img_h, img_h),
        _clip((n.cx + n.w / 2) * img_w, img_w),
        _clip((n.cy + n.h / 2) * img_h, img_h),
    )


def pixel_to_norm(
    b: BoundingBox, img_w: float, img_h: float, class_id: int = 0
) -> NormalizedBox:
    """Inverse of :func:`norm_to_pixel` for boxes inside the image.

    Raises ``ValueError`` when the box has zero width or height, since that
    cannot be represented as a label.
    """
    _check_dims(img_w, img_h)
    return NormalizedBox(
        class_id,
        (b.x_min + b.x_max) / 2 / img_w,
        (b.y_min + b.y_max) / 2 / img_h,
        b.width / img_w,
        b.height / img_h,
    )


def sort_detections(dets: Iterable[Detection]) -> list[Detection]:
    """Confidence descending, then class_id ascending, then input order."""
    indexed = list(enumerate(dets))
    indexed.sort(key=lambda p: (-p[1].confidence, p[1].class_id, p[0]))
    return [d for _, d in indexed]


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Per-class greedy non-maximum suppression.

    A detection is kept iff its IoU with every already-kept detection of the
    same class is strictly below ``iou_threshold``. The result follows the
    total order of :func:`sort_detections`.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold {iou_threshold} outside [0, 1]")
    kept: list[Detection] = []
    kept_by_class: dict[int, list[BoundingBox]] = {}
    for det in sort_detections(dets):
        same = kept_by_class.setdefault(det.class_id, [])
        if all(iou(det.box, k) < iou_threshold for k in same):
            same.append(det.box)
            kept.append(det)
    return kept
