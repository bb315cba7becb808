"""Hand proposals from skin blobs.

Blobs whose boundary is poorly explained by one line are treated as two
joined arms and split; every arm region then gets a minimum-area rectangle
and is cut at one or more wrist lines near the end facing the frame centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Line2D, OrientedRect, fit_line_tls, kmeans_lines, min_area_rect
from .raster import Blob, connected_components, distance_transform, watershed_split


@dataclass(frozen=True)
class ProposalConfig:
    mse_threshold: float = 3.0
    wrist_fractions: tuple[float, ...] = (0.8, 1.0, 1.2)
    kmeans_max_iters: int = 50
    min_blob_area: int = 400
    watershed_h: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "wrist_fractions", tuple(float(f) for f in self.wrist_fractions))
        if self.mse_threshold <= 0 or self.kmeans_max_iters <= 0 or self.min_blob_area <= 0:
            raise ValueError("proposal thresholds must be positive")
        if self.watershed_h <= 0:
            raise ValueError("watershed_h must be positive")
        if not self.wrist_fractions or any(f <= 0 for f in self.wrist_fractions):
            raise ValueError("wrist_fractions must be a non-empty list of positive values")

    def to_dict(self) -> dict:
        return {
            "mse_threshold": self.mse_threshold,
            "wrist_fractions": list(self.wrist_fractions),
            "kmeans_max_iters": self.kmeans_max_iters,
            "min_blob_area": self.min_blob_area,
            "watershed_h": self.watershed_h,
        }


@dataclass(frozen=True)
class HandProposal:
    """Half-open pixel box ``(x, y, w, h)`` cut from one arm region."""

    box: tuple[int, int, int, int]
    source_blob_id: int
    wrist_fraction: float

    def to_dict(self) -> dict:
        x, y, w, h = self.box
        return {"x": x, "y": y, "w": w, "h": h, "wrist_fraction": self.wrist_fraction, "blob_id": self.source_blob_id}


def normalized_line_mse(blob: Blob) -> float:
    """Boundary line-fit residual divided by the square root of the blob area."""
    _, mse = fit_line_tls(blob.contour)
    return mse / math.sqrt(blob.area)


def is_two_arm_region(blob: Blob, cfg: ProposalConfig) -> bool:
    if len(blob.contour) == 0:
        raise ValueError("blob has no contour")
    return normalized_line_mse(blob) > cfg.mse_threshold


def _nearest_line(points, lines) -> np.ndarray:
    d = np.stack([ln.distance(points) for ln in lines], axis=1)
    return d, np.argmin(d, axis=1)


def split_two_arm_blob(blob: Blob, lines, dist: np.ndarray, cfg: ProposalConfig) -> tuple[Blob, Blob]:
    """Split a two-arm blob into one region per line.

    Watershed sub-blobs go to the line nearest their centroid (ties to line
    0).  If one line ends up with nothing, the sub-blob that leans most
    towards it is moved over.  When the watershed finds a single basin the
    pixels are divided by which line is nearer.
    """
    lines = list(lines)
    if len(lines) != 2:
        raise ValueError("expected exactly two lines")
    subs = watershed_split(blob, dist, cfg.watershed_h)
    if len(subs) < 2:
        _, side = _nearest_line(blob.pixels, lines)
        if side.all() or not side.any():
            # Degenerate: both lines coincide over the blob; halve along the first line.
            t = (blob.pixels - np.array(lines[0].point)) @ np.array(lines[0].direction)
            side = (t > np.median(t)).astype(np.int64)
        parts = [blob.pixels[side == j] for j in (0, 1)]
    else:
        cents = np.array([s.centroid for s in subs])
        d, side = _nearest_line(cents, lines)
        for empty in (0, 1):
            if not (side == empty).any():
                margin = d[:, 1 - empty] - d[:, empty]
                side[int(np.argmax(margin))] = empty
        parts = [np.concatenate([s.pixels for s, k in zip(subs, side) if k == j]) for j in (0, 1)]
    return Blob.from_pixels(parts[0]), Blob.from_pixels(parts[1])


def wrist_cut_proposals(
    region: Blob,
    rect: OrientedRect,
    frame_center,
    cfg: ProposalConfig,
    frame_shape=None,
    blob_id: int = 0,
) -> list[HandProposal]:
    """Boxes of the region's pixels lying beyond each wrist line.

    The hand end is the short side of ``rect`` whose midpoint is nearest
    ``frame_center``.  For each wrist fraction ``f`` the wrist line sits
    ``f * 2b`` from that side, perpendicular to the long axis.

    Args:
        frame_shape: ``(H, W)`` used to clip boxes; defaults to unbounded.
    """
    (cx, cy), (a, b) = rect.center, rect.half_extents
    u = np.array(rect.axis)
    c = np.array([cx, cy])
    fc = np.asarray(frame_center, dtype=np.float64)
    ends = [c + a * u, c - a * u]
    # Ties go to the +axis end.
    hand_dir = u if np.hypot(*(ends[0] - fc)) <= np.hypot(*(ends[1] - fc)) else -u
    s = (region.pixels - c) @ hand_dir
    min_pixels = min(64.0, region.area / 10.0)
    out = []
    for f in cfg.wrist_fractions:
        d = f * 2.0 * b
        sel = region.pixels[s >= a - d]
        if len(sel) < min_pixels or len(sel) == 0:
            continue
        x0, y0 = sel.min(axis=0)
        x1, y1 = sel.max(axis=0) + 1
        if frame_shape is not None:
            hgt, wid = frame_shape[:2]
            x0, y0 = max(int(x0), 0), max(int(y0), 0)
            x1, y1 = min(int(x1), wid), min(int(y1), hgt)
            if x1 <= x0 or y1 <= y0:
                continue
        out.append(HandProposal((int(x0), int(y0), int(x1 - x0), int(y1 - y0)), blob_id, f))
    return out


@dataclass
class ArmRegion:
    """One arm region with its rectangle, kept for inspection and rendering."""

    region: Blob
    rect: OrientedRect
    blob_id: int
    split: bool
    lines: list[Line2D] = field(default_factory=list)


@dataclass
class ProposalResult:
    proposals: list[HandProposal]
    arms: list[ArmRegion]
    blobs: list[Blob]


def arm_regions(blob: Blob, dist: np.ndarray, cfg: ProposalConfig) -> tuple[list[Blob], bool, list[Line2D]]:
    """The blob itself, or its two arm halves when it fails the one-line test."""
    if len(blob.contour) < 4 or not is_two_arm_region(blob, cfg):
        return [blob], False, []
    clusters = kmeans_lines(blob.contour, 2, cfg.kmeans_max_iters)
    lines = [ln for ln, _ in clusters]
    first, second = split_two_arm_blob(blob, lines, dist, cfg)
    return [first, second], True, lines


def generate_proposals(mask: np.ndarray, cfg: ProposalConfig | None = None) -> ProposalResult:
    """Run every proposal step on a cleaned skin mask."""
    cfg = cfg or ProposalConfig()
    mask = np.asarray(mask, dtype=bool)
    shape = mask.shape
    center = ((shape[1] - 1) / 2.0, (shape[0] - 1) / 2.0)
    blobs = connected_components(mask, cfg.min_blob_area)
    dist = distance_transform(mask) if blobs else None
    proposals, arms = [], []
    for bid, blob in enumerate(blobs):
        regions, split, lines = arm_regions(blob, dist, cfg)
        for region in regions:
            if region.area < 3:
                continue
            rect = min_area_rect(region)
            arms.append(ArmRegion(region, rect, bid, split, lines))
            proposals.extend(wrist_cut_proposals(region, rect, center, cfg, shape, bid))
    return ProposalResult(proposals, arms, blobs)
