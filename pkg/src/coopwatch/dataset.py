"""YOLO-format corpus handling: labels, validation, splitting, augmentation.

On-disk layout::

    root/images/**/*.jpg|png
    root/labels/**/*.txt     (same relative stem as the image)
    root/classes.txt         (one class name per line, id = line index)
    root/split.json

Image decoding is delegated to Pillow; everything downstream works on
8-bit RGB ``numpy`` arrays of shape ``(H, W, 3)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from PIL import Image

from coopwatch.geometry import BoundingBox, NormalizedBox, norm_to_pixel

DEFAULT_CLASSES = ("Fowl Pox", "Healthy", "Infectious Coryza", "Newcastle Disease")
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")
SPLITS = ("train", "test", "val")


class LabelError(ValueError):
    """A label file line that cannot be turned into a box."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message}, line {line}")
        self.line = line


@dataclass(frozen=True)
class ClassMap:
    names: tuple[str, ...] = DEFAULT_CLASSES

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise ValueError("class map is empty")
        if any(not n.strip() for n in self.names):
            raise ValueError("class names must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be unique")

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, class_id: object) -> bool:
        return isinstance(class_id, int) and 0 <= class_id < len(self.names)

    def name(self, class_id: int) -> str:
        return self.names[class_id]

    def id_of(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def load(cls, path: str | Path) -> "ClassMap":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(line.strip() for line in lines if line.strip()))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text("".join(n + "\n" for n in self.names), encoding="utf-8")


@dataclass(frozen=True)
class LabeledImage:
    image_id: str
    width: int
    height: int
    annotations: tuple[NormalizedBox, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "annotations", tuple(self.annotations))
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"{self.image_id}: image size must be positive")

    def pixel_boxes(self) -> list[tuple[int, BoundingBox]]:
        return [
            (a.class_id, norm_to_pixel(a, self.width, self.height))
            for a in self.annotations
        ]


@dataclass(frozen=True)
class SplitManifest:
    seed: int
    ratios: tuple[float, float, float]
    assignment: dict[str, str]

    def __post_init__(self) -> None:
        check_ratios(self.ratios)
        bad = {v for v in self.assignment.values() if v not in SPLITS}
        if bad:
            raise ValueError(f"unknown split names: {sorted(bad)}")

    def ids(self, split: str) -> list[str]:
        return sorted(k for k, v in self.assignment.items() if v == split)

    def sizes(self) -> tuple[int, int, int]:
        c = Counter(self.assignment.values())
        return (c["train"], c["test"], c["val"])

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "assignment": dict(sorted(self.assignment.items())),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        doc = json.loads(text)
        return cls(int(doc["seed"]), tuple(doc["ratios"]), dict(doc["assignment"]))


def check_ratios(ratios: Sequence[float]) -> None:
    if len(ratios) != 3:
        raise ValueError("ratios must be (train, test, val)")
    if any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative: {tuple(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")


# --- label files -------------------------------------------------------------


def parse_label_file(text: str, class_map: ClassMap) -> list[NormalizedBox]:
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 5:
            raise LabelError(f"expected 5 fields, got {len(tokens)}", lineno)
        try:
            cls_f = float(tokens[0])
            cx, cy, w, h = (float(t) for t in tokens[1:])
        except ValueError:
            raise LabelError("non-numeric field", lineno) from None
        if not cls_f.is_integer():
            raise LabelError("class_id must be an integer", lineno)
        class_id = int(cls_f)
        if class_id not in class_map:
            raise LabelError("class_id out of range", lineno)
        for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
            if not (0.0 <= v <= 1.0):
                raise LabelError(f"{name} out of [0,1]", lineno)
        if w <= 0.0 or h <= 0.0:
            raise LabelError("box width and height must be positive", lineno)
        boxes.append(NormalizedBox(class_id, cx, cy, w, h))
    return boxes


def serialize_label_file(boxes: Iterable[NormalizedBox]) -> str:
    return "".join(
        f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}\n" for b in boxes
    )


# --- corpus on disk ------------------------------------------------------------


def load_class_map(root: str | Path) -> ClassMap:
    path = Path(root) / "classes.txt"
    return ClassMap.load(path) if path.exists() else ClassMap()


def _index(base: Path, suffixes: Sequence[str]) -> dict[str, Path]:
    if not base.is_dir():
        return {}
    out = {}
    for p in sorted(base.rglob("*")):
        if p.is_file() and p.suffix.lower() in suffixes:
            out[p.relative_to(base).with_suffix("").as_posix()] = p
    return out


def image_index(root: str | Path) -> dict[str, Path]:
    return _index(Path(root) / "images", IMAGE_SUFFIXES)


def label_index(root: str | Path) -> dict[str, Path]:
    return _index(Path(root) / "labels", (".txt",))


def image_size(path: str | Path) -> tuple[int, int]:
    with Image.open(path) as im:
        return im.size


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def save_image(path: str | Path, pixels: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels.astype(np.uint8), mode="RGB").save(path)


def load_corpus(root: str | Path, class_map: ClassMap | None = None) -> list[LabeledImage]:
    """Read every image/label pair under ``root``; images without labels get no boxes.

    Raises on the first invalid label. Use :func:`validate_dataset` for a
    full report instead.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    class_map = class_map or load_class_map(root)
    labels = label_index(root)
    corpus = []
    for image_id, img_path in image_index(root).items():
        w, h = image_size(img_path)
        boxes: list[NormalizedBox] = []
        if image_id in labels:
            try:
                boxes = parse_label_file(labels[image_id].read_text(encoding="utf-8"), class_map)
            except LabelError as exc:
                raise ValueError(f"{labels[image_id]}: {exc}") from exc
        corpus.append(LabeledImage(image_id, w, h, tuple(boxes)))
    return corpus


@dataclass
class ValidationReport:
    images: int = 0
    missing_labels: list[str] = field(default_factory=list)
    orphan_labels: list[str] = field(default_factory=list)
    class_counts: dict[str, int] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    strict: bool = False

    @property
    def ok(self) -> bool:
        if self.violations:
            return False
        return not (self.strict and (self.missing_labels or self.orphan_labels))

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "images": self.images,
            "missing_labels": self.missing_labels,
            "orphan_labels": self.orphan_labels,
            "class_counts": self.class_counts,
            "violations": self.violations,
        }

    def render(self) -> str:
        lines = [f"images: {self.images}"]
        lines += [f"  {name}: {n}" for name, n in self.class_counts.items()]
        lines += [f"warning: image without label: {i}" for i in self.missing_labels]
        lines += [f"warning: label without image: {i}" for i in self.orphan_labels]
        lines += [f"violation: {v}" for v in self.violations]
        lines.append("ok" if self.ok else "FAILED")
        return "\n".join(lines)


def validate_dataset(
    root: str | Path, class_map: ClassMap | None = None, strict: bool = False
) -> ValidationReport:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not readable: {root}")
    class_map = class_map or load_class_map(root)
    images, labels = image_index(root), label_index(root)
    report = ValidationReport(images=len(images), strict=strict)
    report.missing_labels = sorted(set(images) - set(labels))
    report.orphan_labels = sorted(set(labels) - set(images))
    counts = Counter()
    for image_id in sorted(set(images) & set(labels)):
        try:
            w, h = image_size(images[image_id])
        except OSError as exc:
            report.violations.append(f"{image_id}: unreadable image ({exc})")
            continue
        if w <= 0 or h <= 0:
            report.violations.append(f"{image_id}: empty image")
            continue
        try:
            boxes = parse_label_file(labels[image_id].read_text(encoding="utf-8"), class_map)
        except LabelError as exc:
            report.violations.append(f"{image_id}: {exc}")
            continue
        counts.update(b.class_id for b in boxes)
    report.class_counts = {class_map.name(i): counts[i] for i in range(len(class_map))}
    return report


# --- splitting ---------------------------------------------------------------


def _partition(ids: list[str], ratios: Sequence[float], rng: np.random.Generator) -> dict[str, str]:
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(order)
    n_train = math.floor(n * ratios[0])
    n_test = math.floor(n * ratios[1])
    out = {}
    for i, image_id in enumerate(order):
        out[image_id] = "train" if i < n_train else "test" if i < n_train + n_test else "val"
    return out


def _dominant_class(img: LabeledImage) -> int:
    if not img.annotations:
        return -1
    counts = Counter(a.class_id for a in img.annotations)
    return min(counts, key=lambda c: (-counts[c], c))


def split_dataset(
    corpus: Sequence[LabeledImage],
    ratios: Sequence[float] = (0.7, 0.2, 0.1),
    seed: int = 0,
    stratify: bool = False,
) -> SplitManifest:
    """Seeded train/test/val partition.

    The first ``floor(n * train)`` shuffled ids go to train, the next
    ``floor(n * test)`` to test and the remainder to val. With ``stratify``
    the same rule is applied separately within each dominant-class group.
    """
    check_ratios(ratios)
    if not corpus:
        raise ValueError("cannot split an empty corpus")
    ids = sorted(img.image_id for img in corpus)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids in corpus")
    rng = np.random.default_rng(seed)
    if not stratify:
        assignment = _partition(ids, ratios, rng)
    else:
        groups: dict[int, list[str]] = {}
        for img in sorted(corpus, key=lambda i: i.image_id):
            groups.setdefault(_dominant_class(img), []).append(img.image_id)
        assignment = {}
        for key in sorted(groups):
            assignment.update(_partition(groups[key], ratios, rng))
    return SplitManifest(seed, tuple(float(r) for r in ratios), assignment)


# --- augmentation ------------------------------------------------------------


@dataclass(frozen=True)
class HorizontalFlip:
    name = "horizontal_flip"


@dataclass(frozen=True)
class Letterbox:
    target_w: int = 640
    target_h: int = 640
    pad_value: int = 114
    name = "letterbox"

    def __post_init__(self) -> None:
        if self.target_w <= 0 or self.target_h <= 0:
            raise ValueError("letterbox target dimensions must be positive")
        if not (0 <= self.pad_value <= 255):
            raise ValueError("pad_value must fit in 8 bits")


@dataclass(frozen=True)
class RandomCrop:
    min_scale: float = 0.5
    max_scale: float = 1.0
    min_box_visibility: float = 0.3
    name = "random_crop"

    def __post_init__(self) -> None:
        if not (0.0 < self.min_scale <= self.max_scale <= 1.0):
            raise ValueError("random_crop needs 0 < min_scale <= max_scale <= 1")
        if not (0.0 <= self.min_box_visibility <= 1.0):
            raise ValueError("min_box_visibility outside [0, 1]")


Transform = HorizontalFlip | Letterbox | RandomCrop

_TRANSFORMS = {"horizontal_flip": HorizontalFlip, "letterbox": Letterbox, "random_crop": RandomCrop}


@dataclass(frozen=True)
class AugmentationSpec:
    transforms: tuple[Transform, ...]
    rng_seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "AugmentationSpec":
        transforms = []
        for item in doc.get("transforms", []):
            item = dict(item)
            kind = item.pop("type", None)
            if kind not in _TRANSFORMS:
                raise ValueError(f"unknown transform type: {kind!r}")
            transforms.append(_TRANSFORMS[kind](**item))
        return cls(tuple(transforms), int(doc.get("rng_seed", 0)))

    @classmethod
    def load(cls, path: str | Path) -> "AugmentationSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def image_rng(seed: int, image_id: str) -> np.random.Generator:
    # Per-image stream so results do not depend on worker scheduling.
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def _to_norm(class_id: int, x0: float, y0: float, x1: float, y1: float, w: int, h: int) -> NormalizedBox | None:
    x0, x1 = min(max(x0, 0.0), w), min(max(x1, 0.0), w)
    y0, y1 = min(max(y0, 0.0), h), min(max(y1, 0.0), h)
    bw, bh = (x1 - x0) / w, (y1 - y0) / h
    if bw <= 0.0 or bh <= 0.0:
        return None
    cx = min(max((x0 + x1) / 2 / w, 0.0), 1.0)
    cy = min(max((y0 + y1) / 2 / h, 0.0), 1.0)
    return NormalizedBox(class_id, cx, cy, min(bw, 1.0), min(bh, 1.0))


def _flip(pixels: np.ndarray, img: LabeledImage) -> tuple[np.ndarray, LabeledImage]:
    boxes = tuple(NormalizedBox(a.class_id, 1.0 - a.cx, a.cy, a.w, a.h) for a in img.annotations)
    return pixels[:, ::-1].copy(), LabeledImage(img.image_id, img.width, img.height, boxes)


def _letterbox(pixels: np.ndarray, img: LabeledImage, t: Letterbox) -> tuple[np.ndarray, LabeledImage]:
    w, h = img.width, img.height
    scale = min(t.target_w / w, t.target_h / h)
    new_w = min(t.target_w, max(1, round(w * scale)))
    new_h = min(t.target_h, max(1, round(h * scale)))
    left = (t.target_w - new_w) // 2
    top = (t.target_h - new_h) // 2
    resized = Image.fromarray(pixels, mode="RGB").resize((new_w, new_h), Image.BILINEAR)
    out = np.full((t.target_h, t.target_w, 3), t.pad_value, dtype=np.uint8)
    out[top : top + new_h, left : left + new_w] = np.asarray(resized)
    sx, sy = new_w / w, new_h / h
    boxes = []
    for class_id, b in img.pixel_boxes():
        nb = _to_norm(
            class_id,
            b.x_min * sx + left,
            b.y_min * sy + top,
            b.x_max * sx + left,
            b.y_max * sy + top,
            t.target_w,
            t.target_h,
        )
        if nb is not None:
            boxes.append(nb)
    return out, LabeledImage(img.image_id, t.target_w, t.target_h, tuple(boxes))


def _crop_window(w: int, h: int, t: RandomCrop, rng: np.random.Generator) -> tuple[int, int, int, int] | None:
    for _ in range(10):
        scale = rng.uniform(t.min_scale, t.max_scale)
        cw = min(w, round(w * math.sqrt(scale)))
        ch = min(h, round(h * math.sqrt(scale)))
        if cw <= 0 or ch <= 0:
            continue
        x0 = int(rng.integers(0, w - cw + 1))
        y0 = int(rng.integers(0, h - ch + 1))
        return x0, y0, cw, ch
    return None


def _crop(pixels: np.ndarray, img: LabeledImage, t: RandomCrop, rng: np.random.Generator) -> tuple[np.ndarray, LabeledImage]:
    window = _crop_window(img.width, img.height, t, rng)
    if window is None:
        return pixels, img
    x0, y0, cw, ch = window
    boxes = []
    for class_id, b in img.pixel_boxes():
        if b.area <= 0:
            continue
        vx0, vy0 = max(b.x_min, x0), max(b.y_min, y0)
        vx1, vy1 = min(b.x_max, x0 + cw), min(b.y_max, y0 + ch)
        visible = max(0.0, vx1 - vx0) * max(0.0, vy1 - vy0)
        if visible <= 0 or visible / b.area < t.min_box_visibility:
            continue
        nb = _to_norm(class_id, vx0 - x0, vy0 - y0, vx1 - x0, vy1 - y0, cw, ch)
        if nb is not None:
            boxes.append(nb)
    out = pixels[y0 : y0 + ch, x0 : x0 + cw].copy()
    return out, LabeledImage(img.image_id, cw, ch, tuple(boxes))


def apply_augmentations(
    img: LabeledImage, pixels: np.ndarray, spec: AugmentationSpec
) -> tuple[np.ndarray, LabeledImage]:
    """Apply ``spec.transforms`` in order; boxes that become invalid are dropped."""
    if pixels.shape[:2] != (img.height, img.width):
        raise ValueError(
            f"{img.image_id}: buffer is {pixels.shape[1]}x{pixels.shape[0]}, "
            f"labels say {img.width}x{img.height}"
        )
    rng = image_rng(spec.rng_seed, img.image_id)
    for t in spec.transforms:
        if isinstance(t, HorizontalFlip):
            pixels, img = _flip(pixels, img)
        elif isinstance(t, Letterbox):
            pixels, img = _letterbox(pixels, img, t)
        elif isinstance(t, RandomCrop):
            pixels, img = _crop(pixels, img, t, rng)
        else:
            raise TypeError(f"unsupported transform {t!r}")
    return pixels, img


def augment_corpus(root: str | Path, out: str | Path, spec: AugmentationSpec) -> int:
    """Augment every labeled image under ``root`` into a new corpus at ``out``."""
    root, out = Path(root), Path(out)
    class_map = load_class_map(root)
    images = image_index(root)
    corpus = load_corpus(root, class_map)
    for img in corpus:
        pixels = load_image(images[img.image_id])
        new_pixels, new_img = apply_augmentations(img, pixels, spec)
        save_image(out / "images" / f"{img.image_id}.png", new_pixels)
        label_path = out / "labels" / f"{img.image_id}.txt"
        label_path.parent.mkdir(parents=True, exist_ok=True)
        label_path.write_text(serialize_label_file(new_img.annotations), encoding="utf-8")
    class_map.dump(out / "classes.txt")
    return len(corpus)
