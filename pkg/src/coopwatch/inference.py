"""Detector backends and the post-processing chain.

A backend turns one frame into raw candidate detections. The only backend
shipped is :class:`ReplayBackend`, which returns pre-recorded candidates keyed
by image id and stands in for a trained network. A neural backend would
accept an 8-bit RGB frame letterboxed to 640x640 (see
``coopwatch.dataset.Letterbox``) and return the same :class:`RawInference`.
"""

from __future__ import annotations

import abc
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from PIL import Image, UnidentifiedImageError

from coopwatch.evaluation.io import detection_from_dict, detection_to_dict
from coopwatch.geometry import Detection, nms, sort_detections


class InferenceError(Exception):
    pass


class UnknownImage(InferenceError):
    pass


class BadImage(InferenceError):
    pass


@dataclass(frozen=True)
class PostprocessConfig:
    conf_threshold: float = 0.25
    nms_iou_threshold: float = 0.45
    max_detections: int = 300

    def __post_init__(self) -> None:
        for name in ("conf_threshold", "nms_iou_threshold"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} outside [0, 1]")
        if self.max_detections < 1:
            raise ValueError("max_detections must be >= 1")


@dataclass(frozen=True)
class RawInference:
    image_id: str
    candidates: tuple[Detection, ...]
    model_tag: str


def image_id_for_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()[:16]


def check_image_bytes(data: bytes) -> None:
    try:
        with Image.open(io.BytesIO(data), formats=("PNG", "JPEG")) as im:
            im.verify()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise BadImage(f"bad image: {exc}") from exc


class Backend(abc.ABC):
    model_tag: str = "unknown"

    @abc.abstractmethod
    def infer(self, image: bytes | None = None, image_id: str | None = None) -> RawInference:
        """Run detection on one frame."""


class ReplayStore(Mapping[str, tuple[Detection, ...]]):
    """Immutable image_id -> candidate detections map."""

    def __init__(self, records: Mapping[str, Sequence[Detection]]):
        self._data = MappingProxyType({k: tuple(v) for k, v in records.items()})

    def __getitem__(self, key: str) -> tuple[Detection, ...]:
        return self._data[key]

    def __iter__(self):
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    @classmethod
    def load(cls, path: str | Path) -> "ReplayStore":
        records: dict[str, tuple[Detection, ...]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    image_id = str(doc["image_id"])
                    dets = tuple(detection_from_dict(d) for d in doc["detections"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}: bad replay record on line {lineno}: {exc}") from exc
                if image_id in records:
                    raise ValueError(f"{path}: duplicate image_id {image_id!r} on line {lineno}")
                records[image_id] = dets
        return cls(records)

    def dumps(self) -> str:
        return "".join(
            json.dumps({"image_id": k, "detections": [detection_to_dict(d) for d in self._data[k]]}) + "\n"
            for k in sorted(self._data)
        )

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


class ReplayBackend(Backend):
    def __init__(self, store: ReplayStore, model_tag: str = "replay"):
        self.store = store
        self.model_tag = model_tag

    @classmethod
    def from_file(cls, path: str | Path, model_tag: str | None = None) -> "ReplayBackend":
        return cls(ReplayStore.load(path), model_tag or f"replay:{Path(path).name}")

    def infer(self, image: bytes | None = None, image_id: str | None = None) -> RawInference:
        """Look up candidates by ``image_id``, or by a content hash of ``image``.

        Image bytes, when given, must decode.
        """
        if image is not None:
            check_image_bytes(image)
        if image_id is None:
            if image is None:
                raise UnknownImage("no fixture for image: neither bytes nor image_id given")
            image_id = image_id_for_bytes(image)
        try:
            candidates = self.store[image_id]
        except KeyError:
            raise UnknownImage(f"no fixture for image {image_id!r}") from None
        return RawInference(image_id, candidates, self.model_tag)


def infer(backend: Backend, image: bytes | None = None, image_id: str | None = None) -> RawInference:
    return backend.infer(image=image, image_id=image_id)


def postprocess(raw: RawInference | Iterable[Detection], cfg: PostprocessConfig | None = None) -> list[Detection]:
    """Confidence filter, per-class NMS, then keep the ``max_detections`` best."""
    cfg = cfg or PostprocessConfig()
    candidates = raw.candidates if isinstance(raw, RawInference) else tuple(raw)
    kept = [d for d in candidates if d.confidence >= cfg.conf_threshold]
    kept = nms(kept, cfg.nms_iou_threshold)
    return sort_detections(kept)[: cfg.max_detections]
