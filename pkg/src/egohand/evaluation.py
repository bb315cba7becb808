"""Detection and skin-presence metrics.

Box matching follows the PASCAL VOC protocol: detections are processed by
descending score and a second detection of an already matched box counts
as a false positive.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SETTINGS = ("office", "street", "bench", "kitchen", "coffee_bar", "other")
AP_MODES = ("all_point", "eleven_point")


def iou(a, b) -> float:
    """Intersection over union of two half-open ``(x, y, w, h)`` boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


@dataclass(frozen=True)
class PRPoint:
    score_threshold: float
    precision: float
    recall: float


def _det_key(d):
    return (-float(d["score"]), tuple(d["box"]))


def match_detections(dets, gts, iou_threshold: float) -> list[tuple[float, bool]]:
    """Flag each detection as true or false positive.

    Args:
        dets: Mapping ``frame_id -> list of {"box", "score"}``.
        gts: Mapping ``frame_id -> list of boxes``.
        iou_threshold: Minimum overlap for a match.

    Returns:
        ``(score, is_tp)`` pairs, grouped by frame in sorted frame order and
        by descending score within a frame.
    """
    out = []
    for fid in sorted(dets):
        boxes = list(gts.get(fid, []))
        matched = [False] * len(boxes)
        for d in sorted(dets[fid], key=_det_key):
            best, best_j = -1.0, -1
            for j, g in enumerate(boxes):
                if matched[j]:
                    continue
                o = iou(d["box"], g)
                if o > best:
                    best, best_j = o, j
            tp = best_j >= 0 and best >= iou_threshold
            if tp:
                matched[best_j] = True
            out.append((float(d["score"]), tp))
    return out


def precision_recall_curve(flags, scores, n_gt: int) -> list[PRPoint]:
    """One PR point per distinct score, highest threshold first.

    Precision is 1 where nothing passes the threshold; recall is 0 when
    there are no ground-truth boxes.
    """
    flags = np.asarray(flags, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    flags, scores = flags[order], scores[order]
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    points = []
    for i in range(len(scores)):
        if i + 1 < len(scores) and scores[i + 1] == scores[i]:
            continue
        npos = tp[i] + fp[i]
        precision = float(tp[i] / npos) if npos else 1.0
        recall = float(tp[i] / n_gt) if n_gt else 0.0
        points.append(PRPoint(float(scores[i]), precision, recall))
    return points


def average_precision(curve, mode: str = "all_point") -> float:
    """Area under the interpolated precision envelope.

    ``all_point`` integrates the envelope (precision at recall r is the
    best precision at any recall >= r); ``eleven_point`` averages it at
    recall 0, 0.1, ..., 1.
    """
    if mode not in AP_MODES:
        raise ValueError(f"unknown AP mode {mode!r}")
    if not curve:
        return 0.0
    rec = np.array([p.recall for p in curve])
    prec = np.array([p.precision for p in curve])
    if mode == "eleven_point":
        vals = []
        for t in np.linspace(0.0, 1.0, 11):
            sel = rec >= t - 1e-12
            vals.append(prec[sel].max() if sel.any() else 0.0)
        return float(np.mean(vals))
    env = np.maximum.accumulate(prec[::-1])[::-1]
    prev = np.concatenate([[0.0], rec[:-1]])
    return float(np.sum((rec - prev) * env))


@dataclass
class IoUResult:
    iou_threshold: float
    curve: list[PRPoint]
    ap: float
    n_tp: int
    n_det: int


@dataclass
class EvalReport:
    ap_mode: str
    n_gt: int
    results: list[IoUResult] = field(default_factory=list)
    frame_presence: dict | None = None

    @property
    def ap(self) -> dict[float, float]:
        return {r.iou_threshold: r.ap for r in self.results}

    def to_dict(self) -> dict:
        d = {
            "ap_mode": self.ap_mode,
            "n_gt": self.n_gt,
            "ap": {f"{r.iou_threshold:g}": r.ap for r in self.results},
            "curves": {
                f"{r.iou_threshold:g}": [
                    {"score_threshold": p.score_threshold, "precision": p.precision, "recall": p.recall}
                    for p in r.curve
                ]
                for r in self.results
            },
            "counts": {f"{r.iou_threshold:g}": {"tp": r.n_tp, "detections": r.n_det} for r in self.results},
        }
        if self.frame_presence is not None:
            d["frame_presence"] = self.frame_presence
        return d

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iou", "score_threshold", "precision", "recall"])
            for r in self.results:
                for p in r.curve:
                    wr.writerow([f"{r.iou_threshold:g}", repr(p.score_threshold), repr(p.precision), repr(p.recall)])

    def plot(self, path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        for r in self.results:
            ax.plot(
                [p.recall for p in r.curve],
                [p.precision for p in r.curve],
                label=f"IoU {r.iou_threshold:g} (AP {r.ap:.3f})",
            )
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower left")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def evaluate_detections(dets, gts, iou_thresholds=(0.2, 0.3, 0.4, 0.5), mode: str = "all_point") -> EvalReport:
    """PR curve and AP at each IoU threshold.

    Args:
        dets: Mapping ``frame_id -> list of {"box", "score"}``.
        gts: Mapping ``frame_id -> list of boxes``; frames missing from
            ``dets`` still contribute their boxes to the recall denominator.
    """
    if mode not in AP_MODES:
        raise ValueError(f"unknown AP mode {mode!r}")
    n_gt = sum(len(v) for v in gts.values())
    report = EvalReport(mode, n_gt)
    for t in iou_thresholds:
        pairs = match_detections(dets, gts, t)
        scores = [s for s, _ in pairs]
        flags = [f for _, f in pairs]
        curve = precision_recall_curve(flags, scores, n_gt)
        report.results.append(IoUResult(float(t), curve, average_precision(curve, mode), int(sum(flags)), len(flags)))
    return report


def predict_presence(mask: np.ndarray, area_fraction: float = 0.005) -> bool:
    """True if some 8-connected skin component covers ``area_fraction`` of the frame."""
    from .raster import connected_components

    mask = np.asarray(mask, dtype=bool)
    need = area_fraction * mask.size
    return any(b.area >= need for b in connected_components(mask, 1))


def frame_presence_metrics(predicted, labels, settings) -> dict:
    """Hands-present (TP) and hands-absent (TN) frame rates per setting.

    A rate whose denominator is empty is reported as None.  The ``total``
    entry pools every frame.

    Raises:
        ValueError: On misaligned inputs or an unknown setting tag.
    """
    predicted, labels, settings = list(predicted), list(labels), list(settings)
    if not len(predicted) == len(labels) == len(settings):
        raise ValueError("predictions, labels and settings must align")
    counts = defaultdict(lambda: [0, 0, 0, 0])  # tp, pos, tn, neg
    for p, y, s in zip(predicted, labels, settings):
        if s not in SETTINGS:
            raise ValueError(f"unknown setting {s!r}")
        for key in (s, "total"):
            c = counts[key]
            if y:
                c[1] += 1
                c[0] += bool(p)
            else:
                c[3] += 1
                c[2] += not p
    out = {}
    for key in [s for s in SETTINGS if s in counts] + (["total"] if counts else []):
        tp, pos, tn, neg = counts[key]
        out[key] = {
            "tp_rate": tp / pos if pos else None,
            "tn_rate": tn / neg if neg else None,
            "n_present": pos,
            "n_absent": neg,
        }
    return out
