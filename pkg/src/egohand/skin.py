"""Per-pixel skin model: colour and Gabor features, regression-tree ensemble.

The model is a bagged ensemble of regression trees fit on 0/1 skin labels,
so its output is a per-pixel skin probability in ``[0, 1]``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve
from skimage.color import rgb2hsv, rgb2lab

from .raster import disc

MODEL_FORMAT = "egohand-skin-model"
MODEL_VERSION = 1
N_COLOR = 9


@dataclass(frozen=True)
class FeatureConfig:
    """Gabor filter bank applied to the luminance channel.

    ``keypoint_texture`` reserves room for dense keypoint-descriptor texture
    features; no such extractor ships, so it must stay False.
    """

    orientations: int = 4
    wavelengths: tuple[float, ...] = (4.0, 8.0)
    aspect: float = 0.5
    keypoint_texture: bool = False

    def __post_init__(self):
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        if self.orientations < 0 or any(w <= 0 for w in self.wavelengths):
            raise ValueError("invalid Gabor bank")

    @property
    def length(self) -> int:
        return N_COLOR + self.orientations * len(self.wavelengths)


def gabor_kernel(wavelength: float, theta: float, aspect: float = 0.5) -> np.ndarray:
    """Complex Gabor kernel with one-octave bandwidth and zero DC response."""
    sigma = 0.56 * wavelength
    r = int(np.ceil(3 * sigma))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    xr = xx * np.cos(theta) + yy * np.sin(theta)
    yr = -xx * np.sin(theta) + yy * np.cos(theta)
    env = np.exp(-(xr**2 + (aspect * yr) ** 2) / (2 * sigma**2))
    carrier = np.exp(2j * np.pi * xr / wavelength)
    kernel = env * carrier
    # Remove the DC leak of the real part so flat regions respond with 0.
    kernel -= env * (kernel.sum() / env.sum())
    return kernel / np.abs(kernel).sum()


def color_features(frame: np.ndarray) -> np.ndarray:
    """RGB, HSV and CIELAB (D65) channels, each scaled to ``[0, 1]``.

    L is divided by 100; a and b are mapped through ``(v + 128) / 255`` so
    the achromatic point sits at ``128 / 255``.
    """
    rgb = frame.astype(np.float64) / 255.0
    hsv = rgb2hsv(rgb)
    lab = rgb2lab(rgb)
    lab_n = np.stack(
        [lab[..., 0] / 100.0, (lab[..., 1] + 128.0) / 255.0, (lab[..., 2] + 128.0) / 255.0],
        axis=-1,
    )
    return np.clip(np.concatenate([rgb, hsv, lab_n], axis=-1), 0.0, 1.0)


def extract_pixel_features(frame: np.ndarray, config: FeatureConfig | None = None) -> np.ndarray:
    """Per-pixel feature map of shape ``(H, W, config.length)``.

    Raises:
        ValueError: If the frame is not a 3-channel image.
    """
    config = config or FeatureConfig()
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) frame, got shape {frame.shape}")
    if config.keypoint_texture:
        raise ValueError("keypoint texture features are not available in this build")
    colors = color_features(frame)
    lum = colors[..., 6]
    responses = []
    for wl in config.wavelengths:
        for k in range(config.orientations):
            kernel = gabor_kernel(wl, np.pi * k / config.orientations, config.aspect)
            r = kernel.shape[0] // 2
            padded = np.pad(lum, r, mode="reflect")
            resp = fftconvolve(padded, kernel, mode="valid")
            responses.append(np.abs(resp))
    if not responses:
        return colors
    return np.concatenate([colors, np.stack(responses, axis=-1)], axis=-1)


@dataclass(frozen=True)
class RegressionTree:
    """Array-encoded binary tree.  ``feature[i] < 0`` marks node ``i`` as a leaf.

    Internal nodes send ``x[feature] <= threshold`` left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return self.value[node]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


def _best_split(X: np.ndarray, y: np.ndarray):
    """Best variance-reduction split over all features, or None."""
    n = len(y)
    total = y.sum()
    best_gain, best = 0.0, None
    parent = total * total / n
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)[:-1]
        nl = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        # SSE reduction = sum_l^2/n_l + sum_r^2/n_r - total^2/n
        gain = csum**2 / nl + (total - csum) ** 2 / (n - nl) - parent
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain + 1e-12:
            lo, hi = xs[i], xs[i + 1]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            best_gain, best = gain[i], (f, thr)
    return best


def fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_samples_split: int = 2) -> RegressionTree:
    """Greedy variance-reduction regression tree."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            lst.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        value[node] = float(yi.mean())
        if depth >= max_depth or len(idx) < min_samples_split or yi.min() == yi.max():
            continue
        split = _best_split(X[idx], yi)
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, float(thr)
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        # Right pushed first so the left subtree gets lower node ids.
        stack.append((rnode, idx[~mask], depth + 1))
        stack.append((lnode, idx[mask], depth + 1))
    return RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.clip(np.asarray(value, dtype=np.float64), 0.0, 1.0),
    )


@dataclass(frozen=True)
class SkinModel:
    feature_config: FeatureConfig
    trees: tuple[RegressionTree, ...]
    max_depth: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_features(self, X: np.ndarray) -> np.ndarray:
        """Ensemble mean for an ``(N, F)`` feature matrix."""
        if X.shape[1] != self.feature_config.length:
            raise ValueError(
                f"feature length {X.shape[1]} does not match model ({self.feature_config.length})"
            )
        acc = np.zeros(len(X), dtype=np.float64)
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        cfg = asdict(self.feature_config)
        cfg["wavelengths"] = list(cfg["wavelengths"])
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "feature_config": cfg,
            "max_depth": self.max_depth,
            "meta": self.meta,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkinModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a skin model file")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported skin model version {d.get('version')}")
        cfg = FeatureConfig(**d["feature_config"])
        trees = tuple(RegressionTree.from_dict(t) for t in d["trees"])
        for t in trees:
            if (t.feature >= cfg.length).any():
                raise ValueError("split feature index out of range")
        return cls(cfg, trees, int(d["max_depth"]), dict(d.get("meta", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "SkinModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sample_training_pixels(features, mask, samples_per_frame, rng):
    """Class-balanced pixel sample from one frame.

    Each class gets up to half the per-frame budget, drawn without
    replacement.
    """
    flat = features.reshape(-1, features.shape[-1])
    labels = mask.reshape(-1)
    half = samples_per_frame // 2
    picks = []
    for cls in (True, False):
        idx = np.flatnonzero(labels == cls)
        if len(idx) > half:
            idx = np.sort(rng.choice(idx, size=half, replace=False))
        picks.append(idx)
    idx = np.concatenate(picks)
    return flat[idx], labels[idx].astype(np.float64)


def train_skin_model(
    frames,
    masks,
    *,
    seed: int,
    n_trees: int = 10,
    max_depth: int = 12,
    samples_per_frame: int = 2000,
    feature_config: FeatureConfig | None = None,
) -> SkinModel:
    """Fit the skin ensemble on annotated frames.

    Every tree sees a bootstrap resample of the pooled, class-balanced pixel
    sample.  Identical inputs and seed give an identical model.

    Raises:
        ValueError: On frame/mask count or size mismatch, or when either
            class is absent from all masks.
    """
    feature_config = feature_config or FeatureConfig()
    if len(frames) != len(masks) or not frames:
        raise ValueError("need the same, nonzero number of frames and masks")
    if n_trees < 1 or max_depth < 0 or samples_per_frame < 2:
        raise ValueError("invalid training parameters")
    for i, (fr, m) in enumerate(zip(frames, masks)):
        if np.asarray(fr).shape[:2] != np.asarray(m).shape:
            raise ValueError(f"mask {i} has shape {np.asarray(m).shape}, frame is {np.asarray(fr).shape[:2]}")
    if not any(np.asarray(m).any() for m in masks):
        raise ValueError("positive (skin) class absent from all masks")
    if all(np.asarray(m).all() for m in masks):
        raise ValueError("negative (non-skin) class absent from all masks")

    rng = np.random.default_rng(seed)
    Xs, ys = [], []
    for fr, m in zip(frames, masks):
        feats = extract_pixel_features(fr, feature_config)
        X, y = sample_training_pixels(feats, np.asarray(m, dtype=bool), samples_per_frame, rng)
        Xs.append(X)
        ys.append(y)
    X = np.concatenate(Xs)
    y = np.concatenate(ys)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, len(y), size=len(y))
        trees.append(fit_tree(X[boot], y[boot], max_depth))
    meta = {"seed": int(seed), "n_samples": int(len(y)), "n_frames": len(frames)}
    return SkinModel(feature_config, tuple(trees), max_depth, meta)


def predict_skin_map(model: SkinModel, frame: np.ndarray) -> np.ndarray:
    """Skin probability per pixel, shape ``(H, W)``."""
    feats = extract_pixel_features(frame, model.feature_config)
    h, w, f = feats.shape
    return model.predict_features(feats.reshape(-1, f)).reshape(h, w)


def threshold_and_clean(
    probs: np.ndarray, tau: float = 0.5, open_radius: int = 2, close_radius: int = 4
) -> np.ndarray:
    """Binarise a probability map, then open and close with disc elements.

    Outside the frame counts as foreground for erosion, so blobs entering
    from the image edge are not eaten away there.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    mask = np.asarray(probs) >= tau
    if open_radius > 0:
        se = disc(open_radius)
        mask = ndimage.binary_erosion(mask, se, border_value=1)
        mask = ndimage.binary_dilation(mask, se, border_value=0)
    if close_radius > 0:
        se = disc(close_radius)
        mask = ndimage.binary_dilation(mask, se, border_value=0)
        mask = ndimage.binary_erosion(mask, se, border_value=1)
    return mask
