"""Command-line entry point.

Exit codes: 0 success, 1 validation or input failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from coopwatch import __version__
from coopwatch.dataset import (
    AugmentationSpec,
    SplitManifest,
    augment_corpus,
    load_class_map,
    load_corpus,
    split_dataset,
    validate_dataset,
)
from coopwatch.evaluation import EvalConfig, confusion_matrix, evaluate, write_report
from coopwatch.evaluation.io import ground_truth_from_corpus, load_detections
from coopwatch.evaluation.report import render_report
from coopwatch.inference import InferenceError, PostprocessConfig, ReplayBackend, postprocess


class CommandFailed(Exception):
    """Reported on stderr, exit status 1."""


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ratios must be three comma-separated numbers: {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"ratios must be three comma-separated numbers: {text!r}")
    return parts


def _unit(text: str) -> float:
    v = float(text)
    if not (0.0 <= v <= 1.0):
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return v


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise CommandFailed(f"{what} not found: {path}")
    return path


# --- dataset -----------------------------------------------------------------


def cmd_dataset_validate(args) -> int:
    report = validate_dataset(_require(args.root, "dataset root"), strict=args.strict)
    print(json.dumps(report.to_dict(), indent=2) if args.json else report.render())
    return 0 if report.ok else 1


def cmd_dataset_split(args) -> int:
    root = _require(args.root, "dataset root")
    corpus = load_corpus(root)
    manifest = split_dataset(corpus, args.ratios, args.seed, stratify=args.stratify)
    out = args.out or root / "split.json"
    out.write_text(manifest.to_json(), encoding="utf-8")
    train, test, val = manifest.sizes()
    print(f"train {train}  test {test}  val {val}  -> {out}")
    return 0


def cmd_dataset_augment(args) -> int:
    root = _require(args.root, "dataset root")
    spec = AugmentationSpec.load(_require(args.spec, "augmentation spec"))
    out = args.out or root.with_name(root.name + "_aug")
    n = augment_corpus(root, out, spec)
    print(f"augmented {n} images -> {out}")
    return 0


# --- eval --------------------------------------------------------------------


def cmd_eval_run(args) -> int:
    gt_root = _require(args.gt, "ground-truth root")
    dets_path = _require(args.dets, "detections file")
    class_map = load_class_map(gt_root)
    corpus = load_corpus(gt_root, class_map)
    if args.split:
        manifest = SplitManifest.from_json(_require(gt_root / "split.json", "split manifest").read_text())
        keep = set(manifest.ids(args.split))
        corpus = [img for img in corpus if img.image_id in keep]
    gts = ground_truth_from_corpus(corpus)
    preds = load_detections(dets_path)
    unknown = sorted(set(preds) - set(gts))
    if unknown and not args.split:
        raise CommandFailed(f"{dets_path}: detections for images not in {gt_root}: {', '.join(unknown[:5])}")
    preds = {k: v for k, v in preds.items() if k in gts}

    cfg = EvalConfig(report_conf_threshold=args.conf)
    result = evaluate(preds, gts, class_map.names, cfg)
    cm = confusion_matrix(preds, gts, class_map.names, args.cm_conf, args.cm_iou)
    written = write_report(args.out, result, class_map.names, cm)
    print(render_report(result.per_class, result.overall, class_map.names, result.best_f1), end="")
    print()
    print(cm.to_csv().replace("\r\n", "\n"), end="")
    print(f"\nwrote {len(written)} files to {args.out}")
    return 0


# --- inference / service -----------------------------------------------------


def cmd_predict(args) -> int:
    backend = ReplayBackend.from_file(_require(args.fixture, "fixture"))
    cfg = PostprocessConfig(args.conf, args.nms_iou, args.max_det)
    raw = backend.infer(image_id=args.image_id)
    dets = postprocess(raw, cfg)
    doc = {
        "image_id": raw.image_id,
        "model_tag": raw.model_tag,
        "detections": [
            {"class_id": d.class_id, "confidence": d.confidence, "box": d.box.as_list()} for d in dets
        ],
    }
    print(json.dumps(doc, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from coopwatch.service import MonitorService, ServiceConfig, create_app

    cfg = ServiceConfig.load(args.config)
    service = MonitorService.from_config(cfg)
    uvicorn.run(create_app(service), host=args.host or cfg.host, port=args.port or cfg.port)
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopwatch", description="Poultry-disease detection evaluation and monitoring."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    ds = sub.add_parser("dataset", help="validate, split and augment a YOLO corpus")
    ds_sub = ds.add_subparsers(dest="action", required=True, metavar="ACTION")

    p = ds_sub.add_parser("validate", help="check images, labels and class ids")
    p.add_argument("root", type=Path, help="corpus root with images/ and labels/")
    p.add_argument("--strict", action="store_true", help="treat unpaired images or labels as failures")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.set_defaults(func=cmd_dataset_validate)

    p = ds_sub.add_parser("split", help="write a seeded train/test/val split.json")
    p.add_argument("root", type=Path)
    p.add_argument("--ratios", type=_ratios, default=(0.7, 0.2, 0.1), help="train,test,val (default 0.7,0.2,0.1)")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed (default 0)")
    p.add_argument("--stratify", action="store_true", help="split within dominant-class groups")
    p.add_argument("--out", type=Path, help="output path (default ROOT/split.json)")
    p.set_defaults(func=cmd_dataset_split)

    p = ds_sub.add_parser("augment", help="write an augmented copy of the corpus")
    p.add_argument("root", type=Path)
    p.add_argument("--spec", type=Path, required=True, help="augmentation spec JSON")
    p.add_argument("--out", type=Path, help="output root (default ROOT_aug)")
    p.set_defaults(func=cmd_dataset_augment)

    ev = sub.add_parser("eval", help="evaluate detections against ground truth")
    ev_sub = ev.add_subparsers(dest="action", required=True, metavar="ACTION")
    p = ev_sub.add_parser("run", help="compute tables, curves and confusion matrix")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth corpus root")
    p.add_argument("--dets", type=Path, required=True, help="detections JSON Lines file")
    p.add_argument("--out", type=Path, required=True, help="report output directory")
    p.add_argument("--split", choices=("train", "test", "val"), help="evaluate one split from ROOT/split.json")
    p.add_argument("--conf", type=_unit, default=0.25, help="reporting confidence for P/R (default 0.25)")
    p.add_argument("--cm-conf", type=_unit, default=0.25, help="confusion-matrix confidence (default 0.25)")
    p.add_argument("--cm-iou", type=_unit, default=0.45, help="confusion-matrix IoU (default 0.45)")
    p.set_defaults(func=cmd_eval_run)

    p = sub.add_parser("predict", help="replay one image through the post-processing chain")
    p.add_argument("--fixture", type=Path, required=True, help="replay fixture JSON Lines file")
    p.add_argument("--image-id", required=True)
    p.add_argument("--conf", type=_unit, default=0.25, help="confidence threshold (default 0.25)")
    p.add_argument("--nms-iou", type=_unit, default=0.45, help="NMS IoU threshold (default 0.45)")
    p.add_argument("--max-det", type=int, default=300, help="detection cap (default 300)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("serve", help="run the HTTP prediction and alerting service")
    p.add_argument("--config", type=Path, help="service config JSON (COOP_CONFIG overrides)")
    p.add_argument("--host", help="override listen host")
    p.add_argument("--port", type=int, help="override listen port")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CommandFailed, InferenceError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
