#!/usr/bin/env python3
"""Regenerate the evaluation fixtures under ``fixtures/``.

Two corpora are designed here from explicit detection "roles" (true
positive on a given ground truth, misclassification, background false
positive). Their expected metrics are computed with the small brute-force
routines in this file, independently of the ``coopwatch`` package:

``fixtures/replay40``
    40 images, 60 ground-truth birds. The pooled F1-vs-confidence curve
    peaks at exactly 0.497; the confusion matrix at conf 0.25 / IoU 0.45
    holds one Fowl Pox predicted as Healthy.

``fixtures/published``
    A detection set whose per-class precision, recall, mAP@0.5 and
    mAP@0.5-0.95 round to the published per-class table, and whose
    macro averages round to the published overall table.

Run from the repository root: ``python scripts/build_fixtures.py``.
Output is deterministic.
"""

from __future__ import annotations

import json
import random
from fractions import Fraction
from pathlib import Path

from PIL import Image

CLASSES = ["Fowl Pox", "Healthy", "Infectious Coryza", "Newcastle Disease"]
FOWL_POX, HEALTHY, CORYZA, NEWCASTLE = range(4)
IOU_GRID = [(50 + 5 * i) / 100 for i in range(10)]
CELL, BOX, MARGIN = 80, 60, 10

ROOT = Path(__file__).resolve().parents[1] / "fixtures"


# --- brute-force oracles -----------------------------------------------------


def ap101(flags: list[bool], n_gt: int) -> float:
    """101-point AP by direct enumeration over recall levels."""
    if n_gt == 0:
        return float("nan") if not flags else 0.0
    points = []
    tp = 0
    for i, f in enumerate(flags, start=1):
        tp += f
        points.append((Fraction(tp, n_gt), Fraction(tp, i)))
    total = Fraction(0)
    for k in range(101):
        r = Fraction(k, 100)
        candidates = [p for rec, p in points if rec >= r]
        total += max(candidates) if candidates else 0
    return float(total / 101)


def pooled_f1_sweep(roles: list[dict], n_gt: int) -> tuple[float, float]:
    """Best pooled F1 over the 0.001 confidence grid; smallest c on ties."""
    best = (-1.0, None)
    for i in range(1001):
        c = i / 1000
        kept = [r for r in roles if r["conf"] >= c]
        tp = sum(1 for r in kept if r["kind"] == "tp")
        p = Fraction(tp, len(kept)) if kept else Fraction(1)
        rec = Fraction(tp, n_gt)
        f1 = 2 * p * rec / (p + rec) if p + rec else Fraction(0)
        if f1 > best[0]:
            best = (f1, c)
    return float(best[0]), best[1]


# --- layout ------------------------------------------------------------------


class Layout:
    """Hands out disjoint cells across images so boxes never overlap."""

    def __init__(self, n_images: int, cols: int, rows: int, prefix: str, rng: random.Random):
        self.w, self.h = cols * CELL, rows * CELL
        cells = [(f"{prefix}{i:03d}", c, r) for i in range(n_images) for r in range(rows) for c in range(cols)]
        rng.shuffle(cells)
        self.free = cells
        self.images = sorted({c[0] for c in cells})

    def take(self) -> tuple[str, float, float]:
        image_id, c, r = self.free.pop()
        return image_id, c * CELL + MARGIN, r * CELL + MARGIN


def shifted_box(x: float, y: float, q: float) -> list[float]:
    """Box of the same size shifted right so that its IoU with (x, y, BOX) is q."""
    dx = BOX * (1 - q) / (1 + q)
    return [round(x + dx, 6), y, round(x + dx + BOX, 6), y + BOX]


def gt_box(x: float, y: float) -> list[float]:
    return [x, y, x + BOX, y + BOX]


def write_corpus(root: Path, layout: Layout, gts: dict[str, list], dets: list[dict]) -> None:
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    (root / "classes.txt").write_text("".join(c + "\n" for c in CLASSES))
    blank = Image.new("RGB", (layout.w, layout.h), (96, 128, 96))
    for image_id in layout.images:
        blank.save(root / "images" / f"{image_id}.png")
        lines = []
        for class_id, (x0, y0, x1, y1) in gts.get(image_id, []):
            cx, cy = (x0 + x1) / 2 / layout.w, (y0 + y1) / 2 / layout.h
            w, h = (x1 - x0) / layout.w, (y1 - y0) / layout.h
            lines.append(f"{class_id} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}\n")
        (root / "labels" / f"{image_id}.txt").write_text("".join(lines))
    dets = sorted(dets, key=lambda d: (d["image_id"], -d["confidence"], d["box"][0]))
    with open(root / "detections.jsonl", "w") as fh:
        for d in dets:
            fh.write(json.dumps(d) + "\n")
    by_image: dict[str, list] = {i: [] for i in layout.images}
    for d in dets:
        by_image[d["image_id"]].append({k: d[k] for k in ("class_id", "confidence", "box")})
    with open(root / "replay.jsonl", "w") as fh:
        for image_id in layout.images:
            fh.write(json.dumps({"image_id": image_id, "detections": by_image[image_id]}) + "\n")


# --- replay40 ----------------------------------------------------------------


def design_replay40() -> None:
    rng = random.Random(40)
    layout = Layout(40, cols=4, rows=3, prefix="frame_", rng=rng)
    roles: list[dict] = []

    def gt_role(true_cls, kind, pred_cls, conf, q):
        roles.append({"true": true_cls, "kind": kind, "pred": pred_cls, "conf": conf, "q": q})

    # 55 high-confidence true positives spread over [0.52, 0.99] plus one at 0.497.
    tp_classes = [FOWL_POX] * 13 + [HEALTHY] * 16 + [CORYZA] * 13 + [NEWCASTLE] * 14
    rng.shuffle(tp_classes)
    confs = [round(0.99 - i * (0.99 - 0.52) / 54, 4) for i in range(55)] + [0.497]
    for cls, conf in zip(tp_classes, confs):
        gt_role(cls, "tp", cls, conf, round(rng.uniform(0.6, 0.95), 3))
    gt_role(FOWL_POX, "mis", HEALTHY, 0.71, 0.8)
    gt_role(FOWL_POX, "mis", NEWCASTLE, 0.66, 0.8)
    gt_role(CORYZA, "mis", NEWCASTLE, 0.81, 0.8)
    gt_role(FOWL_POX, "tp", FOWL_POX, 0.30, 0.75)
    # background false positives
    for pred, conf in ((CORYZA, 0.88), (HEALTHY, 0.4965), (CORYZA, 0.35), (NEWCASTLE, 0.28),
                       (FOWL_POX, 0.10), (HEALTHY, 0.05)):
        roles.append({"true": None, "kind": "bg", "pred": pred, "conf": conf, "q": None})

    gts: dict[str, list] = {}
    dets = []
    for r in roles:
        image_id, x, y = layout.take()
        if r["true"] is not None:
            gts.setdefault(image_id, []).append((r["true"], gt_box(x, y)))
            box = shifted_box(x, y, r["q"])
        else:
            box = gt_box(x, y)
        dets.append({"image_id": image_id, "class_id": r["pred"], "confidence": r["conf"], "box": box})

    n_gt = sum(len(v) for v in gts.values())
    best_f1, best_c = pooled_f1_sweep(roles, n_gt)
    assert n_gt == 60 and best_c == 0.497, (n_gt, best_c)

    k = len(CLASSES)
    cm = [[0] * (k + 1) for _ in range(k + 1)]
    for r in roles:
        if r["conf"] < 0.25:
            if r["true"] is not None:
                cm[k][r["true"]] += 1
            continue
        cm[r["pred"]][r["true"] if r["true"] is not None else k] += 1
    assert cm[HEALTHY][FOWL_POX] == 1

    out = ROOT / "replay40"
    write_corpus(out, layout, gts, dets)
    expected = {
        "class_names": CLASSES,
        "n_gt": n_gt,
        "best_f1": best_f1,
        "best_confidence": best_c,
        "confusion_matrix": {"conf_threshold": 0.25, "iou_threshold": 0.45, "rows_predicted_cols_true": cm},
    }
    (out / "expected.json").write_text(json.dumps(expected, indent=2) + "\n")
    print(f"replay40: best F1 {best_f1:.4f} at {best_c}")


# --- published ---------------------------------------------------------------

PUBLISHED_ROWS = {
    FOWL_POX: (0.683, 0.870, 0.898, 0.744),
    HEALTHY: (0.676, 1.000, 0.995, 0.903),
    CORYZA: (0.412, 1.000, 0.995, 0.697),
    NEWCASTLE: (1.000, 0.598, 0.995, 0.554),
}
# (n_gt, TPs reported at conf >= 0.25, FPs reported, TPs below 0.25, FPs below 0.25)
COUNTS = {
    FOWL_POX: (131, 114, 53, 17, 40),
    HEALTHY: (50, 50, 24, 0, 0),
    CORYZA: (42, 42, 60, 0, 0),
    NEWCASTLE: (97, 58, 0, 39, 3),
}


def ap101_fast(flags: list[bool], n_gt: int) -> float:
    """Float twin of :func:`ap101` used inside the searches."""
    if n_gt == 0:
        return float("nan") if not flags else 0.0
    rec, prec = [], []
    tp = 0
    for i, f in enumerate(flags, start=1):
        tp += f
        rec.append(tp / n_gt)
        prec.append(tp / i)
    for i in range(len(prec) - 2, -1, -1):
        prec[i] = max(prec[i], prec[i + 1])
    total, j = 0.0, 0
    for k in range(101):
        r = k / 100
        while j < len(rec) and rec[j] < r:
            j += 1
        if j == len(rec):
            break
        total += prec[j]
    return total / 101


def _class_ap(entries: list[tuple[bool, int]], n_gt: int, ap=ap101) -> list[float]:
    """AP at each grid threshold; entry = (is_tp_at_0.5, highest grid index still TP)."""
    return [ap([tp and lvl >= i for tp, lvl in entries], n_gt) for i in range(len(IOU_GRID))]


def _flags(n_tp: int, n_fp: int, fp_pos: set[int]) -> list[bool]:
    return [i not in fp_pos for i in range(n_tp + n_fp)]


def design_class(cls: int, rng: random.Random, bias: float) -> list[tuple[bool, int, bool]]:
    """Local search over FP ranks, then over IoU levels, to hit the published row.

    Returns ranked (is_tp, level, reported) entries.
    """
    _, _, target_50, target_5095 = PUBLISHED_ROWS[cls]
    n, tp_r, fp_r, tp_u, fp_u = COUNTS[cls]
    n_hi, n_lo = tp_r + fp_r, tp_u + fp_u

    # Start with every FP ranked last in its block (highest AP), then move
    # single FPs to other free ranks while that brings AP@0.5 closer.
    hi = set(range(n_hi - fp_r, n_hi))
    lo = set(range(n_lo - fp_u, n_lo))

    def ap50(hi, lo):
        return ap101_fast(_flags(tp_r, fp_r, hi) + _flags(tp_u, fp_u, lo), n)

    current = ap50(hi, lo)
    for _ in range(20000):
        if abs(current - target_50) < 0.0001:
            break
        use_hi = bool(fp_r) and (not fp_u or rng.random() < 0.5)
        block, size = (hi, n_hi) if use_hi else (lo, n_lo)
        if not block:
            continue
        old = rng.choice(sorted(block))
        new = rng.randrange(size)
        if new in block:
            continue
        trial = (block - {old}) | {new}
        s = ap50(trial, lo) if use_hi else ap50(hi, trial)
        if abs(s - target_50) < abs(current - target_50):
            current = s
            if use_hi:
                hi = trial
            else:
                lo = trial
    flags = _flags(tp_r, fp_r, hi) + _flags(tp_u, fp_u, lo)
    assert abs(ap101(flags, n) - target_50) < 0.0005, (cls, current)

    levels = [9 if f else -1 for f in flags]

    def score(levels):
        aps = _class_ap(list(zip(flags, levels)), n, ap101_fast)
        return sum(aps) / len(aps)

    goal = target_5095 - bias
    current = score(levels)
    tp_idx = [i for i, f in enumerate(flags) if f]
    for _ in range(20000):
        if abs(current - goal) < 0.0001:
            break
        i = rng.choice(tp_idx)
        trial = list(levels)
        trial[i] = rng.randrange(10)
        s = score(trial)
        if abs(s - goal) < abs(current - goal):
            levels, current = trial, s
    assert abs(current - target_5095) < 0.0005, (cls, current)
    return [(f, lv, i < n_hi) for i, (f, lv) in enumerate(zip(flags, levels))]


def design_published() -> None:
    rng = random.Random(1)
    designs = {cls: design_class(cls, rng, bias=0.0002) for cls in PUBLISHED_ROWS}

    rows = {}
    for cls, entries in designs.items():
        n, tp_r, fp_r, _, _ = COUNTS[cls]
        aps = _class_ap([(f, lv) for f, lv, _ in entries], n)
        reported = [f for f, _, rep in entries if rep]
        p = sum(reported) / len(reported)
        r = sum(reported) / n
        rows[cls] = (p, r, aps[0], sum(aps) / len(aps))
        for got, want in zip(rows[cls], PUBLISHED_ROWS[cls]):
            assert abs(got - want) < 0.0005, (cls, got, want)
    overall = [sum(rows[c][j] for c in rows) / len(rows) for j in range(4)]
    for got, want in zip(overall, (0.693, 0.867, 0.971, 0.724)):
        assert round(got, 3) == want, (got, want)

    n_cells = sum(len(e) + COUNTS[c][0] for c, e in designs.items())
    n_images = 40
    cols = rows_ = 8
    assert n_cells <= n_images * cols * rows_
    layout = Layout(n_images, cols, rows_, prefix="bird_", rng=rng)
    gts: dict[str, list] = {}
    dets = []
    for cls, entries in designs.items():
        n_hi = sum(1 for *_, rep in entries if rep)
        n_lo = len(entries) - n_hi
        # distinct confidences: reported in [0.26, 0.99], the rest in [0.01, 0.24]
        hi_conf = [round(0.99 - i * 0.73 / max(n_hi - 1, 1), 4) for i in range(n_hi)]
        lo_conf = [round(0.24 - i * 0.23 / max(n_lo - 1, 1), 4) for i in range(n_lo)]
        covered = 0
        for (is_tp, level, _), conf in zip(entries, hi_conf + lo_conf):
            image_id, x, y = layout.take()
            if is_tp:
                gts.setdefault(image_id, []).append((cls, gt_box(x, y)))
                q = IOU_GRID[level] + 0.02
                box = shifted_box(x, y, q)
                covered += 1
            else:
                box = gt_box(x, y)
            dets.append({"image_id": image_id, "class_id": cls, "confidence": conf, "box": box})
        for _ in range(COUNTS[cls][0] - covered):
            image_id, x, y = layout.take()
            gts.setdefault(image_id, []).append((cls, gt_box(x, y)))

    out = ROOT / "published"
    write_corpus(out, layout, gts, dets)
    expected = {
        "class_names": CLASSES,
        "per_class": {CLASSES[c]: list(v) for c, v in rows.items()},
        "overall": overall,
    }
    (out / "expected.json").write_text(json.dumps(expected, indent=2) + "\n")
    for c, v in rows.items():
        print(f"published: {CLASSES[c]:<18} " + "  ".join(f"{x:.5f}" for x in v))
    print("published: overall            " + "  ".join(f"{x:.5f}" for x in overall))


if __name__ == "__main__":
    design_replay40()
    design_published()
