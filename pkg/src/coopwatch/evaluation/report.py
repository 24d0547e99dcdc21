"""Text tables and CSV curve exports."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from coopwatch.evaluation.ap import RECALL_GRID
from coopwatch.evaluation.confusion import ConfusionMatrix
from coopwatch.evaluation.curves import BestF1, ConfidenceCurve
from coopwatch.evaluation.metrics import ClassMetrics, EvaluationResult, OverallMetrics

PER_CLASS_HEADER = ("Class", "Precision", "Recall", "mAP@0.5", "mAP@0.5-0.95")


def fmt(v: float) -> str:
    return "n/a" if v is None or math.isnan(v) else f"{v:.3f}"


def _table(title: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = [title]
    for r in [header, *rows]:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_per_class(per_class: Sequence[ClassMetrics], class_names: Sequence[str]) -> str:
    rows = [
        (class_names[m.class_id], fmt(m.precision), fmt(m.recall), fmt(m.ap50), fmt(m.ap50_95))
        for m in per_class
    ]
    return _table("PER-CLASS PERFORMANCE", PER_CLASS_HEADER, rows)


def render_overall(overall: OverallMetrics) -> str:
    rows = [
        ("Precision (P)", fmt(overall.precision)),
        ("Recall (R)", fmt(overall.recall)),
        ("mAP@0.5", fmt(overall.map50)),
        ("mAP@0.5-0.95", fmt(overall.map50_95)),
    ]
    return _table("OVERALL PERFORMANCE (ALL CLASSES)", ("Metric", "Value"), rows)


def render_report(
    per_class: Sequence[ClassMetrics],
    overall: OverallMetrics,
    class_names: Sequence[str],
    best_f1: BestF1 | None = None,
) -> str:
    text = render_per_class(per_class, class_names) + "\n" + render_overall(overall)
    if best_f1 is not None:
        text += f"\nbest F1 {best_f1.f1:.3f} at confidence {best_f1.confidence:.3f}\n"
    return text


def _csv(header: Sequence[str], columns: Sequence[np.ndarray]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([f"{v:.6f}" for v in row])
    return buf.getvalue()


def confidence_curve_csv(curve: ConfidenceCurve, class_names: Sequence[str]) -> str:
    ids = sorted(curve.per_class)
    header = ["confidence", *(class_names[c] for c in ids), "all classes"]
    return _csv(header, [curve.grid, *(curve.per_class[c] for c in ids), curve.all_classes])


def pr_curve_csv(result: EvaluationResult, class_names: Sequence[str], iou_threshold: float = 0.5) -> str:
    """Envelope precision on the 101-point recall grid; the last column is the
    mean over classes with a defined AP, so its mean equals mAP at this threshold."""
    ids = list(range(len(class_names)))
    sampled = [result.pr_curves[(c, iou_threshold)].sample(RECALL_GRID) for c in ids]
    defined = [s for s, m in zip(sampled, result.per_class) if m.defined]
    mean = np.mean(defined, axis=0) if defined else np.zeros(len(RECALL_GRID))
    header = ["recall", *class_names, "all classes"]
    return _csv(header, [RECALL_GRID, *sampled, mean])


def metrics_json(result: EvaluationResult, class_names: Sequence[str]) -> str:
    def clean(v: float) -> float | None:
        return None if math.isnan(v) else v

    doc = {
        "per_class": [
            {
                "class_id": m.class_id,
                "class_name": class_names[m.class_id],
                "precision": clean(m.precision),
                "recall": clean(m.recall),
                "ap50": clean(m.ap50),
                "ap50_95": clean(m.ap50_95),
                "n_gt": m.n_gt,
                "n_pred": m.n_pred,
            }
            for m in result.per_class
        ],
        "overall": {k: clean(v) for k, v in vars(result.overall).items()},
        "best_f1": vars(result.best_f1),
        "report_conf_threshold": result.config.report_conf_threshold,
    }
    return json.dumps(doc, indent=2) + "\n"


def write_report(
    out_dir: str | Path,
    result: EvaluationResult,
    class_names: Sequence[str],
    cm: ConfusionMatrix | None = None,
) -> list[Path]:
    """Write tables, metrics JSON, every curve CSV and the confusion matrix."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "report.txt": render_report(result.per_class, result.overall, class_names, result.best_f1),
        "metrics.json": metrics_json(result, class_names),
        "precision_recall.csv": pr_curve_csv(result, class_names),
    }
    for kind, curve in result.confidence_curves.items():
        files[f"{kind}_confidence.csv"] = confidence_curve_csv(curve, class_names)
    if cm is not None:
        files["confusion_matrix.csv"] = cm.to_csv()
    written = []
    for name, text in files.items():
        path = out / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(path)
    return written
