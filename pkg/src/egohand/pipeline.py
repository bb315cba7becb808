"""Configuration, dataset manifests and end-to-end frame processing."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .classifier import Detection, HandClassifier, crop_box, non_max_suppression, score_proposal, train_baseline
from .evaluation import SETTINGS, iou, predict_presence
from .proposals import HandProposal, ProposalConfig, ProposalResult, generate_proposals
from .raster import read_image, read_mask, write_image
from .skin import SkinModel, predict_skin_map, threshold_and_clean

log = logging.getLogger(__name__)

STAGES = ("skin", "mask", "proposals", "scoring", "nms")


class ConfigError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass
class PipelineConfig:
    skin_model: str | None = None
    classifier: dict = field(default_factory=dict)
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    tau_skin: float = 0.5
    open_radius: int = 2
    close_radius: int = 4
    detection_threshold: float = 0.5
    nms_iou: float = 0.3
    eval_iou: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5)
    ap_mode: str = "all_point"
    presence_area_fraction: float = 0.005
    seed: int = 0
    workers: int | None = None
    scorer_workers: int | None = None

    def validate(self, check_paths: bool = True) -> None:
        if not 0 <= self.tau_skin <= 1:
            raise ConfigError("tau_skin must lie in [0, 1]")
        if self.open_radius < 0 or self.close_radius < 0:
            raise ConfigError("morphology radii must be non-negative")
        if not 0 <= self.detection_threshold <= 1:
            raise ConfigError("detection_threshold must lie in [0, 1]")
        if not 0 <= self.nms_iou <= 1:
            raise ConfigError("nms_iou must lie in [0, 1]")
        if not self.eval_iou or any(not 0 < t <= 1 for t in self.eval_iou):
            raise ConfigError("eval_iou values must lie in (0, 1]")
        if self.ap_mode not in ("all_point", "eleven_point"):
            raise ConfigError(f"unknown ap_mode {self.ap_mode!r}")
        if not 0 < self.presence_area_fraction <= 1:
            raise ConfigError("presence_area_fraction must lie in (0, 1]")
        for name in ("workers", "scorer_workers"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.classifier and not ({"baseline", "external"} & set(self.classifier)):
            raise ConfigError("classifier needs a 'baseline' path or an 'external' command")
        if check_paths:
            paths = [self.skin_model, self.classifier.get("baseline")]
            for p in paths:
                if p is not None and not Path(p).is_file():
                    raise ConfigError(f"file not found: {p}")

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "PipelineConfig":
        d = dict(d)
        base = Path(base_dir) if base_dir is not None else None

        def resolve(p):
            if p is None or base is None or os.path.isabs(p):
                return p
            return str(base / p)

        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "proposal" in d:
                pc = dict(d["proposal"])
                if "wrist_fractions" in pc:
                    pc["wrist_fractions"] = tuple(pc["wrist_fractions"])
                d["proposal"] = ProposalConfig(**pc)
            if "eval_iou" in d:
                d["eval_iou"] = tuple(float(t) for t in d["eval_iou"])
            cfg = cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.skin_model = resolve(cfg.skin_model)
        cfg.classifier = dict(cfg.classifier)
        if "baseline" in cfg.classifier:
            cfg.classifier["baseline"] = resolve(cfg.classifier["baseline"])
        return cfg

    @classmethod
    def load(cls, path, check_paths: bool = True) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_dict(data, path.parent)
        cfg.validate(check_paths)
        return cfg

    def to_dict(self) -> dict:
        return {
            "skin_model": self.skin_model,
            "classifier": self.classifier,
            "proposal": self.proposal.to_dict(),
            "tau_skin": self.tau_skin,
            "open_radius": self.open_radius,
            "close_radius": self.close_radius,
            "detection_threshold": self.detection_threshold,
            "nms_iou": self.nms_iou,
            "eval_iou": list(self.eval_iou),
            "ap_mode": self.ap_mode,
            "presence_area_fraction": self.presence_area_fraction,
            "seed": self.seed,
            "workers": self.workers,
            "scorer_workers": self.scorer_workers,
        }

    def load_classifier(self) -> HandClassifier:
        choice = self.classifier
        if "baseline" in choice:
            clf = HandClassifier.load(choice["baseline"])
            if "padding" in choice:
                clf = HandClassifier("baseline", clf.weights, clf.bias, padding=float(choice["padding"]), meta=clf.meta)
            return clf
        if "external" in choice:
            return HandClassifier("external", command=choice["external"], padding=float(choice.get("padding", 0.0)))
        raise ConfigError("no classifier configured")


@dataclass
class FrameRecord:
    frame_id: str
    image: str
    mask: str | None = None
    boxes: list[tuple[int, int, int, int]] | None = None
    setting: str = "other"
    hands_present: bool | None = None

    @property
    def presence_label(self) -> bool | None:
        if self.hands_present is not None:
            return self.hands_present
        if self.boxes is not None:
            return len(self.boxes) > 0
        if self.mask is not None:
            return bool(read_mask(self.mask).any())
        return None

    def mask_path(self) -> str:
        """Explicit mask, else the ``<frame_stem>_mask.png`` sibling of the image."""
        if self.mask is not None:
            return self.mask
        p = Path(self.image)
        return str(p.with_name(p.stem + "_mask.png"))

    def to_dict(self, base_dir=None) -> dict:
        def rel(p):
            if p is None or base_dir is None:
                return p
            try:
                return os.path.relpath(p, base_dir)
            except ValueError:
                return p

        d = {"frame_id": self.frame_id, "image": rel(self.image), "setting": self.setting}
        if self.mask is not None:
            d["mask"] = rel(self.mask)
        if self.boxes is not None:
            d["boxes"] = [list(b) for b in self.boxes]
        if self.hands_present is not None:
            d["hands_present"] = self.hands_present
        return d


def load_manifest(path, check_files: bool = True) -> list[FrameRecord]:
    """Parse a JSON-lines manifest; relative paths are taken from its directory.

    Raises:
        ManifestError: On malformed lines, duplicate frame ids, unknown
            settings or missing files; the message names the line.
    """
    path = Path(path)
    base = path.parent
    records, seen = [], {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                if not isinstance(d, dict):
                    raise ValueError("expected a JSON object")
                fid = str(d["frame_id"])
                image = d["image"]
            except (ValueError, KeyError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed record ({exc})") from None
            if fid in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate frame_id {fid!r} (first seen on line {seen[fid]})")
            seen[fid] = lineno
            setting = d.get("setting", "other")
            if setting not in SETTINGS:
                raise ManifestError(f"{path}:{lineno}: unknown setting {setting!r}")
            boxes = d.get("boxes")
            if boxes is not None:
                try:
                    boxes = [tuple(int(v) for v in b) for b in boxes]
                except (TypeError, ValueError):
                    raise ManifestError(f"{path}:{lineno}: boxes must be [x, y, w, h] lists") from None
                if any(len(b) != 4 or b[2] < 1 or b[3] < 1 for b in boxes):
                    raise ManifestError(f"{path}:{lineno}: boxes must be [x, y, w, h] with w, h >= 1")
            image = str(image if os.path.isabs(image) else base / image)
            mask = d.get("mask")
            if mask is not None and not os.path.isabs(mask):
                mask = str(base / mask)
            for p in (image, mask):
                if check_files and p is not None and not os.path.isfile(p):
                    raise ManifestError(f"{path}:{lineno}: file not found: {p}")
            hp = d.get("hands_present")
            records.append(FrameRecord(fid, image, mask, boxes, setting, None if hp is None else bool(hp)))
    return records


def write_manifest(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(base)) + "\n")


@dataclass
class FrameOutput:
    frame_id: str
    mask: np.ndarray | None = None
    proposals: ProposalResult | None = None
    detections: list[Detection] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    error: str | None = None


class HandDetector:
    """Skin model, proposal generator and classifier bound into one per-frame call."""

    def __init__(self, skin_model: SkinModel, classifier: HandClassifier | None, config: PipelineConfig):
        self.skin_model = skin_model
        self.classifier = classifier
        self.config = config

    @classmethod
    def from_config(cls, config: PipelineConfig, need_classifier: bool = True) -> "HandDetector":
        if config.skin_model is None:
            raise ConfigError("skin_model is not set")
        skin = SkinModel.load(config.skin_model)
        clf = config.load_classifier() if need_classifier else None
        return cls(skin, clf, config)

    def skin_mask(self, frame: np.ndarray, timings: dict | None = None) -> np.ndarray:
        t0 = time.perf_counter()
        probs = predict_skin_map(self.skin_model, frame)
        t1 = time.perf_counter()
        c = self.config
        mask = threshold_and_clean(probs, c.tau_skin, c.open_radius, c.close_radius)
        if timings is not None:
            timings["skin"] = t1 - t0
            timings["mask"] = time.perf_counter() - t1
        return mask

    def propose(self, frame: np.ndarray, timings: dict | None = None):
        mask = self.skin_mask(frame, timings)
        t0 = time.perf_counter()
        result = generate_proposals(mask, self.config.proposal)
        if timings is not None:
            timings["proposals"] = time.perf_counter() - t0
        return mask, result

    def _score_all(self, frame, proposals, frame_id):
        clf = self.classifier
        workers = self.config.scorer_workers or os.cpu_count() or 1
        if clf.kind == "external" and workers > 1 and len(proposals) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(lambda p: score_proposal(clf, frame, p, frame_id), proposals))
        return [score_proposal(clf, frame, p, frame_id) for p in proposals]

    def detect(self, frame: np.ndarray, frame_id: str = "") -> FrameOutput:
        if self.classifier is None:
            raise ConfigError("detection needs a classifier")
        timings = {}
        t_start = time.perf_counter()
        mask, result = self.propose(frame, timings)
        t0 = time.perf_counter()
        scored = self._score_all(frame, result.proposals, frame_id)
        t1 = time.perf_counter()
        kept = non_max_suppression(scored, self.config.nms_iou)
        kept = [d for d in kept if d.score >= self.config.detection_threshold]
        t2 = time.perf_counter()
        timings["scoring"] = t1 - t0
        timings["nms"] = t2 - t1
        timings["frame"] = t2 - t_start
        return FrameOutput(frame_id, mask, result, kept, timings)


def _safe(fn, rec):
    try:
        return fn(rec)
    except Exception as exc:  # per-frame failures are recorded, not raised
        log.warning("frame %s failed: %s", rec.frame_id, exc)
        return FrameOutput(rec.frame_id, error=f"{type(exc).__name__}: {exc}")


def map_frames(fn, records, workers: int | None = None) -> list[FrameOutput]:
    """Apply ``fn`` to each record with a bounded pool, results in manifest order."""
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(records) <= 1:
        return [_safe(fn, r) for r in records]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: _safe(fn, r), records))


def timing_report(outputs) -> dict:
    ok = [o for o in outputs if o.error is None and o.timings]
    stages = {}
    for name in STAGES:
        vals = [o.timings[name] for o in ok if name in o.timings]
        if vals:
            stages[name] = {"total": float(sum(vals)), "mean": float(np.mean(vals)), "max": float(max(vals))}
    frame_times = [o.timings.get("frame", 0.0) for o in ok]
    return {
        "frames": len(outputs),
        "failed": sum(o.error is not None for o in outputs),
        "frame_total": float(sum(frame_times)),
        "frame_mean": float(np.mean(frame_times)) if frame_times else 0.0,
        "stages": stages,
    }


def run_detect(config: PipelineConfig, records, detector: HandDetector | None = None):
    """Detect hands in every manifest frame.

    Returns:
        ``(outputs, timing)``: one FrameOutput per record in manifest order
        and the per-stage timing summary.
    """
    detector = detector or HandDetector.from_config(config)

    def one(rec):
        return detector.detect(read_image(rec.image), rec.frame_id)

    outputs = map_frames(one, records, config.workers)
    return outputs, timing_report(outputs)


def run_propose(config: PipelineConfig, records, detector: HandDetector | None = None):
    detector = detector or HandDetector.from_config(config, need_classifier=False)

    def one(rec):
        mask, result = detector.propose(read_image(rec.image))
        return FrameOutput(rec.frame_id, mask, result)

    return map_frames(one, records, config.workers)


def detection_record(out: FrameOutput) -> dict:
    if out.error is not None:
        return {"frame": out.frame_id, "error": out.error}
    return {"frame": out.frame_id, "detections": [d.to_dict() for d in out.detections]}


def proposal_record(out: FrameOutput) -> dict:
    if out.error is not None:
        return {"frame": out.frame_id, "error": out.error}
    return {"frame": out.frame_id, "proposals": [p.to_dict() for p in out.proposals.proposals]}


def write_jsonl(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_detections(path) -> dict:
    """Load detections JSONL into ``frame_id -> [{"box", "score"}]``; error rows are skipped."""
    dets = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                fid = str(row["frame"])
            except (ValueError, KeyError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed detection record ({exc})") from None
            if "error" in row:
                continue
            dets[fid] = [
                {"box": (int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"])), "score": float(d["score"])}
                for d in row.get("detections", [])
            ]
    return dets


def train_skin_from_records(records, *, seed, n_trees=10, max_depth=12, samples_per_frame=2000):
    from .skin import train_skin_model

    frames, masks = [], []
    for r in records:
        mp = r.mask_path()
        if not os.path.isfile(mp):
            raise ManifestError(f"frame {r.frame_id}: mask not found at {mp}")
        frames.append(read_image(r.image))
        masks.append(read_mask(mp))
    return train_skin_model(
        frames, masks, seed=seed, n_trees=n_trees, max_depth=max_depth, samples_per_frame=samples_per_frame
    )


def jitter_box(box, rng, frame_shape, amount=0.08):
    x, y, w, h = box
    H, W = frame_shape[:2]
    dx, dy = rng.normal(0, amount * w), rng.normal(0, amount * h)
    s = np.exp(rng.normal(0, amount))
    nw, nh = max(int(round(w * s)), 4), max(int(round(h * s)), 4)
    nx = int(round(x + dx + (w - nw) / 2))
    ny = int(round(y + dy + (h - nh) / 2))
    nx, ny = min(max(nx, 0), W - 1), min(max(ny, 0), H - 1)
    return nx, ny, min(nw, W - nx), min(nh, H - ny)


def collect_hand_crops(detector: HandDetector, frames, boxes_per_frame, *, seed=0, jitter_copies=2, neg_iou=0.3):
    """Positive and negative crops for the baseline classifier.

    Positives are the ground-truth boxes plus jittered copies.  Negatives
    are the frame's own proposals that overlap no ground truth by more than
    ``neg_iou``, and one random background window per frame.
    """
    rng = np.random.default_rng(seed)
    pos, neg = [], []
    for frame, gts in zip(frames, boxes_per_frame):
        for g in gts:
            pos.append(crop_box(frame, g))
            for _ in range(jitter_copies):
                pos.append(crop_box(frame, jitter_box(g, rng, frame.shape)))
        _, result = detector.propose(frame)
        for p in result.proposals:
            if all(iou(p.box, g) <= neg_iou for g in gts):
                neg.append(crop_box(frame, p.box))
        H, W = frame.shape[:2]
        for _ in range(10):
            w = int(rng.integers(20, max(21, W // 4)))
            h = int(rng.integers(20, max(21, H // 4)))
            box = (int(rng.integers(0, W - w)), int(rng.integers(0, H - h)), w, h)
            if all(iou(box, g) <= neg_iou for g in gts):
                neg.append(crop_box(frame, box))
                break
    return pos, neg


def train_hand_from_records(detector: HandDetector, records, *, epochs=30, lr=0.1, seed=0):
    frames, boxes = [], []
    for r in records:
        if r.boxes is None:
            continue
        frames.append(read_image(r.image))
        boxes.append(r.boxes)
    if not frames:
        raise ManifestError("no frames with ground-truth boxes")
    pos, neg = collect_hand_crops(detector, frames, boxes, seed=seed)
    return train_baseline(pos, neg, epochs=epochs, lr=lr, seed=seed)


def presence_predictions(detector: HandDetector, records):
    def one(rec):
        return FrameOutput(rec.frame_id, mask=detector.skin_mask(read_image(rec.image)))

    outs = map_frames(one, records, detector.config.workers)
    preds = []
    for o in outs:
        if o.error is not None:
            raise RuntimeError(f"frame {o.frame_id}: {o.error}")
        preds.append(predict_presence(o.mask, detector.config.presence_area_fraction))
    return preds


MASK_TINT = (0, 255, 0)
RECT_COLOR = (0, 0, 255)
PROPOSAL_COLOR = (255, 0, 0)
DETECTION_COLOR = (0, 255, 255)


def render_overlay(frame, mask, proposals, detections, out_path, arms=None, alpha: float = 0.4) -> np.ndarray:
    """Write a PNG with the skin mask tinted and boxes outlined.

    Arm rectangles are blue, proposals red (1 px) and accepted detections
    cyan (2 px).  Returns the rendered array.
    """
    img = np.asarray(frame, dtype=np.float64).copy()
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        img[m] = (1 - alpha) * img[m] + alpha * np.array(MASK_TINT)
    pil = Image.fromarray(np.clip(np.round(img), 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(pil)
    for arm in arms or []:
        pts = [tuple(float(v) for v in c) for c in arm.rect.corners()]
        draw.polygon(pts, outline=RECT_COLOR)
    for p in proposals or []:
        x, y, w, h = p.box if isinstance(p, HandProposal) else p
        draw.rectangle([x, y, x + w - 1, y + h - 1], outline=PROPOSAL_COLOR, width=1)
    for d in detections or []:
        x, y, w, h = d.box if isinstance(d, Detection) else d
        draw.rectangle([x, y, x + w - 1, y + h - 1], outline=DETECTION_COLOR, width=2)
    out = np.asarray(pil)
    try:
        write_image(out_path, out)
    except OSError as exc:
        raise OSError(f"cannot write overlay {out_path}: {exc}") from exc
    return out
