from coopwatch.evaluation.ap import (
    RECALL_GRID,
    PRCurve,
    average_precision,
    exact_average_precision,
    pr_curve,
    rank,
)
from coopwatch.evaluation.confusion import ConfusionMatrix, confusion_matrix
from coopwatch.evaluation.curves import (
    DEFAULT_CONFIDENCE_GRID,
    BestF1,
    ConfidenceCurve,
    confidence_sweep,
    f1_score,
)
from coopwatch.evaluation.matching import (
    COCO_IOU_GRID,
    GroundTruth,
    MatchedDetection,
    match_detections,
)
from coopwatch.evaluation.metrics import (
    ClassMetrics,
    EvalConfig,
    EvaluationResult,
    OverallMetrics,
    evaluate,
    macro_average,
    match_dataset,
)
from coopwatch.evaluation.report import render_report, write_report

__all__ = [
    "BestF1",
    "COCO_IOU_GRID",
    "ClassMetrics",
    "ConfidenceCurve",
    "ConfusionMatrix",
    "DEFAULT_CONFIDENCE_GRID",
    "EvalConfig",
    "EvaluationResult",
    "GroundTruth",
    "MatchedDetection",
    "OverallMetrics",
    "PRCurve",
    "RECALL_GRID",
    "average_precision",
    "confidence_sweep",
    "confusion_matrix",
    "evaluate",
    "exact_average_precision",
    "f1_score",
    "macro_average",
    "match_dataset",
    "match_detections",
    "pr_curve",
    "rank",
    "render_report",
    "write_report",
]
