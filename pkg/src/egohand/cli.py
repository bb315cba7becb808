"""Command-line entry point: ``egohand <command> ...``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 when
some frames failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("egohand")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_synth(args) -> int:
    from .evaluation import SETTINGS
    from .pipeline import FrameRecord, write_manifest
    from .raster import write_image, write_mask
    from .synthetic import make_scene

    out = Path(args.out)
    rng = np.random.default_rng(args.seed)
    records = []
    for i in range(args.n):
        f = make_scene(rng, height=args.height, width=args.width)
        stem = f"frame_{i:05d}"
        img = out / "frames" / f"{stem}.png"
        write_image(img, f.image)
        write_mask(out / "frames" / f"{stem}_mask.png", f.mask)
        setting = SETTINGS[i % 5]
        records.append(FrameRecord(stem, str(img), None, f.boxes, setting, f.hands_present))
    write_manifest(out / "manifest.jsonl", records)
    print(f"wrote {args.n} frames to {out}")
    return EXIT_OK


def cmd_train_skin(args) -> int:
    from .pipeline import load_manifest, train_skin_from_records

    records = load_manifest(args.manifest)
    if args.limit:
        records = records[: args.limit]
    model = train_skin_from_records(
        records, seed=args.seed, n_trees=args.trees, max_depth=args.depth, samples_per_frame=args.samples
    )
    model.save(args.out)
    print(f"skin model: {model.n_trees} trees, {model.meta['n_samples']} samples -> {args.out}")
    return EXIT_OK


def _config(args, check_paths=True):
    from .pipeline import PipelineConfig

    cfg = PipelineConfig.load(args.config, check_paths=check_paths)
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    return cfg


def cmd_train_hand(args) -> int:
    from .pipeline import ConfigError, HandDetector, load_manifest, train_hand_from_records

    # The classifier file named in the config may be the one being trained.
    cfg = _config(args, check_paths=False)
    if cfg.skin_model is None or not Path(cfg.skin_model).is_file():
        raise ConfigError(f"skin model not found: {cfg.skin_model}")
    det = HandDetector.from_config(cfg, need_classifier=False)
    records = load_manifest(args.manifest)
    res = train_hand_from_records(det, records, epochs=args.epochs, lr=args.lr, seed=args.seed)
    res.classifier.save(args.out)
    print(f"baseline classifier: training accuracy {res.accuracy:.4f} -> {args.out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    from .pipeline import detection_record, load_manifest, run_detect, write_jsonl

    cfg = _config(args)
    records = load_manifest(args.manifest)
    outputs, timing = run_detect(cfg, records)
    write_jsonl(args.out, (detection_record(o) for o in outputs))
    if args.timing:
        Path(args.timing).write_text(json.dumps(timing, indent=2) + "\n")
    n_det = sum(len(o.detections) for o in outputs)
    print(f"{len(outputs)} frames, {n_det} detections, {timing['failed']} failed -> {args.out}")
    return EXIT_PARTIAL if timing["failed"] else EXIT_OK


def cmd_propose(args) -> int:
    from .pipeline import load_manifest, proposal_record, run_propose, write_jsonl

    cfg = _config(args)
    records = load_manifest(args.manifest)
    outputs = run_propose(cfg, records)
    write_jsonl(args.out, (proposal_record(o) for o in outputs))
    failed = sum(o.error is not None for o in outputs)
    print(f"{len(outputs)} frames, {failed} failed -> {args.out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_eval_skin(args) -> int:
    from .evaluation import frame_presence_metrics
    from .pipeline import HandDetector, load_manifest, presence_predictions

    cfg = _config(args)
    det = HandDetector.from_config(cfg, need_classifier=False)
    records = load_manifest(args.manifest)
    labels = [r.presence_label for r in records]
    missing = [r.frame_id for r, y in zip(records, labels) if y is None]
    if missing:
        print(f"error: no presence label for frames {missing[:5]}", file=sys.stderr)
        return EXIT_CONFIG
    preds = presence_predictions(det, records)
    metrics = frame_presence_metrics(preds, labels, [r.setting for r in records])
    text = json.dumps(metrics, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_eval_det(args) -> int:
    from .evaluation import evaluate_detections
    from .pipeline import load_manifest, read_detections

    records = load_manifest(args.manifest, check_files=False)
    gts = {r.frame_id: list(r.boxes or []) for r in records}
    dets = read_detections(args.dets)
    unknown = sorted(set(dets) - set(gts))
    if unknown:
        print(f"error: detections for frames not in the manifest: {unknown[:5]}", file=sys.stderr)
        return EXIT_CONFIG
    report = evaluate_detections(dets, gts, args.iou, args.ap_mode)
    if args.out:
        report.write_json(args.out)
    if args.csv:
        report.write_csv(args.csv)
    if args.plot:
        report.plot(args.plot)
    for r in report.results:
        print(f"IoU {r.iou_threshold:g}: AP ({report.ap_mode}) = {r.ap:.4f}  [{r.n_tp} TP / {r.n_det} det, {report.n_gt} GT]")
    return EXIT_OK


def cmd_render(args) -> int:
    from .pipeline import HandDetector, load_manifest, read_detections, render_overlay
    from .raster import read_image

    cfg = _config(args)
    det = HandDetector.from_config(cfg, need_classifier=args.dets is None)
    records = load_manifest(args.manifest)
    given = read_detections(args.dets) if args.dets else None
    out_dir = Path(args.out_dir)
    failed = 0
    for rec in records:
        try:
            frame = read_image(rec.image)
            if given is not None:
                mask, result = det.propose(frame)
                dets = [d["box"] for d in given.get(rec.frame_id, [])]
            else:
                out = det.detect(frame, rec.frame_id)
                mask, result, dets = out.mask, out.proposals, out.detections
            render_overlay(frame, mask, result.proposals, dets, out_dir / f"{rec.frame_id}.png", arms=result.arms)
        except Exception as exc:
            log.warning("frame %s failed: %s", rec.frame_id, exc)
            failed += 1
    print(f"rendered {len(records) - failed} frames to {out_dir}")
    return EXIT_PARTIAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="egohand", description="Egocentric hand detection from skin blobs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--height", type=int, default=180)
    s.add_argument("--width", type=int, default=240)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train-skin", help="train the per-pixel skin model")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trees", type=int, default=10)
    s.add_argument("--depth", type=int, default=12)
    s.add_argument("--samples", type=int, default=2000, help="pixels sampled per frame")
    s.add_argument("--limit", type=int, default=0, help="use only the first N frames")
    s.set_defaults(func=cmd_train_skin)

    s = sub.add_parser("train-hand", help="train the HOG baseline hand classifier")
    s.add_argument("--config", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train_hand)

    for name, func, help_ in (
        ("detect", cmd_detect, "detect hands in every manifest frame"),
        ("propose", cmd_propose, "emit hand proposals without scoring"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True)
        s.add_argument("--manifest", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--workers", type=int, default=None)
        if name == "detect":
            s.add_argument("--timing", help="write per-stage timing JSON here")
        s.set_defaults(func=func)

    s = sub.add_parser("eval-skin", help="frame-level skin presence rates per setting")
    s.add_argument("--config", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_eval_skin)

    s = sub.add_parser("eval-det", help="PR curves and AP against manifest boxes")
    s.add_argument("--dets", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--iou", type=_floats, default=[0.2, 0.3, 0.4, 0.5])
    s.add_argument("--ap-mode", choices=["all_point", "eleven_point"], default="all_point")
    s.add_argument("--out", help="report JSON")
    s.add_argument("--csv", help="PR rows CSV")
    s.add_argument("--plot", help="PR curve image (needs matplotlib)")
    s.set_defaults(func=cmd_eval_det)

    s = sub.add_parser("render", help="draw skin mask, proposals and detections")
    s.add_argument("--config", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--dets", help="draw these detections instead of running the classifier")
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    from .pipeline import ConfigError, ManifestError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ManifestError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
