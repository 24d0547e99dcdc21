"""Reading detections (JSON Lines) and ground truth from a labeled corpus."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from coopwatch.dataset import LabeledImage
from coopwatch.evaluation.matching import GroundTruth
from coopwatch.geometry import BoundingBox, Detection


def detection_from_dict(doc: Mapping) -> Detection:
    return Detection(
        BoundingBox.from_list(doc["box"]), int(doc["class_id"]), float(doc["confidence"])
    )


def detection_to_dict(det: Detection) -> dict:
    return {"class_id": det.class_id, "confidence": det.confidence, "box": det.box.as_list()}


def load_detections(path: str | Path) -> dict[str, list[Detection]]:
    """One JSON object per line: image_id, class_id, confidence, box (pixels)."""
    out: dict[str, list[Detection]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                out.setdefault(str(doc["image_id"]), []).append(detection_from_dict(doc))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: bad detection record on line {lineno}: {exc}") from exc
    return out


def dump_detections(dets: Mapping[str, Sequence[Detection]]) -> str:
    lines = []
    for image_id in sorted(dets):
        for d in dets[image_id]:
            lines.append(json.dumps({"image_id": image_id, **detection_to_dict(d)}))
    return "".join(line + "\n" for line in lines)


def ground_truth_from_corpus(corpus: Iterable[LabeledImage]) -> dict[str, list[GroundTruth]]:
    return {
        img.image_id: [GroundTruth(box, class_id) for class_id, box in img.pixel_boxes()]
        for img in corpus
    }
