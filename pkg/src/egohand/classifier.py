"""Hand/not-hand scoring of proposal crops.

The built-in scorer is a logistic model over HOG descriptors.  An external
scorer can stand in for it: any executable that takes a crop PNG path and
prints one probability.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import iou
from .raster import write_image

HOG_SIZE = 64
HOG_CELL = 8
HOG_BINS = 9
HOG_BLOCK = 2
DESCRIPTOR_LENGTH = HOG_BINS * HOG_BLOCK * HOG_BLOCK * (HOG_SIZE // HOG_CELL - 1) ** 2

CLASSIFIER_FORMAT = "egohand-hand-classifier"
CLASSIFIER_VERSION = 1


def to_gray(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ np.array([0.299, 0.587, 0.114])
    return img / 255.0


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a 2-D array with pixel-centre alignment."""
    h, w = img.shape
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def cell_histograms(gray: np.ndarray) -> np.ndarray:
    """Per-cell orientation histograms, shape ``(cells_y, cells_x, HOG_BINS)``.

    Gradients are central differences with edge replication.  Unsigned
    orientations are split linearly between the two nearest bin centres,
    which sit at multiples of 180/HOG_BINS degrees.
    """
    p = np.pad(gray, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    pos = ang / (np.pi / HOG_BINS)
    lo = np.floor(pos).astype(int) % HOG_BINS
    hi = (lo + 1) % HOG_BINS
    frac = pos - np.floor(pos)
    h, w = gray.shape
    cy, cx = h // HOG_CELL, w // HOG_CELL
    cell_id = (np.arange(h)[:, None] // HOG_CELL) * cx + (np.arange(w)[None, :] // HOG_CELL)
    hist = np.zeros(cy * cx * HOG_BINS)
    np.add.at(hist, (cell_id * HOG_BINS + lo).ravel(), (mag * (1 - frac)).ravel())
    np.add.at(hist, (cell_id * HOG_BINS + hi).ravel(), (mag * frac).ravel())
    return hist.reshape(cy, cx, HOG_BINS)


def hog_descriptor(crop: np.ndarray) -> np.ndarray:
    """1764-long HOG descriptor of a crop resized to 64x64 greyscale.

    Raises:
        ValueError: For an empty crop.
    """
    crop = np.asarray(crop)
    if crop.size == 0 or crop.shape[0] == 0 or crop.shape[1] == 0:
        raise ValueError("cannot describe an empty crop")
    gray = resize_bilinear(to_gray(crop), HOG_SIZE, HOG_SIZE)
    cells = cell_histograms(gray)
    n = cells.shape[0] - HOG_BLOCK + 1
    blocks = []
    eps = 1e-3
    for by in range(n):
        for bx in range(n):
            v = cells[by : by + HOG_BLOCK, bx : bx + HOG_BLOCK].ravel()
            blocks.append(v / np.sqrt(v @ v + eps * eps))
    return np.concatenate(blocks)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass(frozen=True)
class Detection:
    box: tuple[int, int, int, int]
    score: float
    frame_id: str = ""

    def to_dict(self) -> dict:
        x, y, w, h = self.box
        return {"x": x, "y": y, "w": w, "h": h, "score": self.score}


@dataclass(frozen=True)
class HandClassifier:
    """Either a linear baseline (``weights``, ``bias``) or an external ``command``."""

    kind: str = "baseline"
    weights: np.ndarray | None = None
    bias: float = 0.0
    command: str | None = None
    padding: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind == "baseline":
            w = np.zeros(DESCRIPTOR_LENGTH) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
            if w.shape != (DESCRIPTOR_LENGTH,):
                raise ValueError(f"baseline weights must have length {DESCRIPTOR_LENGTH}")
            w = w.copy()
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        elif self.kind == "external":
            if not self.command:
                raise ValueError("external classifier needs a command")
        else:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")

    def score_descriptor(self, desc: np.ndarray) -> float:
        return float(sigmoid(desc @ self.weights + self.bias))

    def score_crop(self, crop: np.ndarray) -> float:
        if self.kind == "baseline":
            return self.score_descriptor(hog_descriptor(crop))
        return run_external_scorer(self.command, crop)

    def to_dict(self) -> dict:
        d = {"format": CLASSIFIER_FORMAT, "version": CLASSIFIER_VERSION, "kind": self.kind, "padding": self.padding}
        if self.kind == "baseline":
            d.update(weights=self.weights.tolist(), bias=self.bias)
        else:
            d["command"] = self.command
        d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HandClassifier":
        if d.get("format") != CLASSIFIER_FORMAT or d.get("version") != CLASSIFIER_VERSION:
            raise ValueError("not a version-1 hand classifier file")
        return cls(
            kind=d["kind"],
            weights=d.get("weights"),
            bias=float(d.get("bias", 0.0)),
            command=d.get("command"),
            padding=float(d.get("padding", 0.0)),
            meta=dict(d.get("meta", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path) -> "HandClassifier":
        return cls.from_dict(json.loads(Path(path).read_text()))


def run_external_scorer(command: str, crop: np.ndarray, timeout: float = 60.0) -> float:
    """Write ``crop`` to a temporary PNG, run ``command <png>``, parse its score.

    Raises:
        RuntimeError: If the command fails or does not print one number in [0, 1].
    """
    fd, tmp = tempfile.mkstemp(suffix=".png", prefix="egohand_crop_")
    os.close(fd)
    try:
        write_image(tmp, crop)
        try:
            proc = subprocess.run(shlex.split(command) + [tmp], capture_output=True, text=True, timeout=timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise RuntimeError(f"external scorer {command!r} failed: {exc}") from exc
    finally:
        os.unlink(tmp)
    if proc.returncode != 0:
        raise RuntimeError(f"external scorer {command!r} exited with status {proc.returncode}: {proc.stderr.strip()}")
    try:
        score = float(proc.stdout.strip())
    except ValueError:
        raise RuntimeError(f"external scorer {command!r} printed {proc.stdout.strip()!r}, expected a number") from None
    if not 0.0 <= score <= 1.0:
        raise RuntimeError(f"external scorer {command!r} printed {score}, outside [0, 1]")
    return score


@dataclass
class TrainingResult:
    classifier: HandClassifier
    accuracy: float
    losses: list[float]


def _log_loss(X, y, w, b) -> float:
    z = X @ w + b
    # log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0
    return float(np.mean(np.logaddexp(0.0, np.where(y > 0, -z, z))))


def train_baseline_descriptors(
    X: np.ndarray, y: np.ndarray, *, epochs: int = 30, lr: float = 0.1, seed: int = 0, shuffle: bool = True
) -> TrainingResult:
    """Logistic regression by per-sample SGD on precomputed descriptors."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (y > 0).any() or not (y <= 0).any():
        raise ValueError("both positive and negative examples are required")
    rng = np.random.default_rng(seed)
    w = np.zeros(X.shape[1])
    b = 0.0
    losses = [_log_loss(X, y, w, b)]
    order = np.arange(len(y))
    for _ in range(epochs):
        if shuffle:
            order = rng.permutation(len(y))
        for i in order:
            g = float(sigmoid(X[i] @ w + b)) - y[i]
            w -= lr * g * X[i]
            b -= lr * g
        losses.append(_log_loss(X, y, w, b))
    acc = float(np.mean((sigmoid(X @ w + b) >= 0.5) == (y > 0)))
    clf = HandClassifier("baseline", w, float(b), meta={"seed": int(seed), "epochs": int(epochs), "lr": float(lr)})
    return TrainingResult(clf, acc, losses)


def train_baseline(positives, negatives, *, epochs: int = 30, lr: float = 0.1, seed: int = 0) -> TrainingResult:
    """Fit the HOG + logistic baseline on positive and negative crops.

    Raises:
        ValueError: If either list is empty.
    """
    if not positives or not negatives:
        raise ValueError("both positive and negative crops are required")
    X = np.stack([hog_descriptor(c) for c in list(positives) + list(negatives)])
    y = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])
    return train_baseline_descriptors(X, y, epochs=epochs, lr=lr, seed=seed)


def crop_box(frame: np.ndarray, box, padding: float = 0.0) -> np.ndarray:
    x, y, w, h = box
    px, py = int(round(w * padding)), int(round(h * padding))
    H, W = frame.shape[:2]
    x0, y0 = max(x - px, 0), max(y - py, 0)
    x1, y1 = min(x + w + px, W), min(y + h + py, H)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box} lies outside the frame")
    return frame[y0:y1, x0:x1]


def score_proposal(clf: HandClassifier, frame: np.ndarray, proposal, frame_id: str = "") -> Detection:
    box = proposal.box if hasattr(proposal, "box") else tuple(proposal)
    score = clf.score_crop(crop_box(frame, box, clf.padding))
    return Detection(tuple(int(v) for v in box), score, frame_id)


def non_max_suppression(dets, iou_nms: float = 0.3) -> list[Detection]:
    """Greedy NMS; equal scores are ordered by box ``(x, y, w, h)``."""
    if not 0.0 <= iou_nms <= 1.0:
        raise ValueError("iou_nms must lie in [0, 1]")
    kept = []
    for d in sorted(dets, key=lambda d: (-d.score, d.box)):
        if all(iou(d.box, k.box) <= iou_nms for k in kept):
            kept.append(d)
    return kept
