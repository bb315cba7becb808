"""Planar geometry for arm regions: TLS lines, k-means lines, hulls, min-area rectangles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Line2D:
    """Infinite line through ``point`` along the unit vector ``direction``."""

    point: tuple[float, float]
    direction: tuple[float, float]

    def __post_init__(self):
        dx, dy = self.direction
        n = math.hypot(dx, dy)
        if n == 0:
            raise ValueError("line direction must be nonzero")
        dx, dy = dx / n, dy / n
        # Canonical sign so equal lines compare equal.
        if dx < 0 or (dx == 0 and dy < 0):
            dx, dy = -dx, -dy
        object.__setattr__(self, "direction", (float(dx), float(dy)))
        object.__setattr__(self, "point", (float(self.point[0]), float(self.point[1])))

    @property
    def normal(self) -> tuple[float, float]:
        return (-self.direction[1], self.direction[0])

    @property
    def angle(self) -> float:
        """Orientation in ``[0, pi)``."""
        return math.atan2(self.direction[1], self.direction[0]) % math.pi

    def distance(self, points) -> np.ndarray:
        """Orthogonal distance of each ``(x, y)`` point to the line."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        nx, ny = self.normal
        return np.abs((p[:, 0] - self.point[0]) * nx + (p[:, 1] - self.point[1]) * ny)


def fit_line_tls(points) -> tuple[Line2D, float]:
    """Total-least-squares line and its mean squared orthogonal residual.

    The line passes through the centroid along the dominant eigenvector of
    the scatter matrix; the residual is the smaller eigenvalue of the
    (population) covariance.

    Raises:
        ValueError: If fewer than two distinct points are given.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(p) < 2 or np.all(p == p[0]):
        raise ValueError("line fit needs at least two distinct points")
    c = p.mean(axis=0)
    d = p - c
    cov = d.T @ d / len(p)
    evals, evecs = np.linalg.eigh(cov)
    mse = max(float(evals[0]), 0.0)
    return Line2D((c[0], c[1]), (evecs[0, 1], evecs[1, 1])), mse


def _principal_axes(p: np.ndarray):
    c = p.mean(axis=0)
    d = p - c
    evals, evecs = np.linalg.eigh(d.T @ d)
    return c, evecs[:, 1], evecs[:, 0]


def _initial_partitions(p: np.ndarray, k: int) -> list[np.ndarray]:
    """Deterministic starting assignments for k-means lines.

    For k = 2 the first candidate splits the points by the sign of their
    projection onto the minor principal axis.  Two more candidates (major
    axis sign, and principal-quadrant parity for crossing lines) are tried
    after it; the best converged result wins, earlier candidates on ties.
    """
    c, major, minor = _principal_axes(p)
    d = p - c
    pm, pn = d @ major, d @ minor
    if k == 2:
        cands = [(pn < 0).astype(np.int64), (pm < 0).astype(np.int64), (pm * pn < 0).astype(np.int64)]
    else:
        order = np.argsort(pn, kind="stable")
        lab = np.empty(len(p), dtype=np.int64)
        lab[order] = np.arange(len(p)) * k // len(p)
        cands = [lab]
    out = []
    for lab in cands:
        counts = np.bincount(lab, minlength=k)
        if (counts >= 2).all():
            out.append(lab)
    if not out:
        order = np.argsort(pn, kind="stable")
        lab = np.empty(len(p), dtype=np.int64)
        lab[order] = np.arange(len(p)) * k // len(p)
        out.append(lab)
    return out


def _fit_all(p, labels, k):
    lines, sse = [], 0.0
    for j in range(k):
        members = p[labels == j]
        if np.all(members == members[0]):
            # All members coincide; any direction fits them exactly.
            line = Line2D(tuple(members[0]), (1.0, 0.0))
            lines.append(line)
            continue
        line, mse = fit_line_tls(members)
        lines.append(line)
        sse += mse * len(members)
    return lines, sse


def _run_kmeans_lines(p, labels, k, max_iters):
    lines, sse = _fit_all(p, labels, k)
    history = [sse]
    for _ in range(max_iters):
        dist = np.stack([ln.distance(p) for ln in lines], axis=1)
        new = np.argmin(dist, axis=1)  # ties -> lower index
        if np.array_equal(new, labels):
            break
        if (np.bincount(new, minlength=k) < 2).any():
            # Reassignment would starve a line; keep the last valid state.
            break
        labels = new
        lines, sse = _fit_all(p, labels, k)
        history.append(sse)
    return lines, labels, history


def kmeans_lines(points, k: int = 2, max_iters: int = 50, history: list | None = None):
    """Cluster points around ``k`` lines by alternating assignment and TLS refits.

    Args:
        points: ``(N, 2)`` point array, ``N >= 2k``.
        k: Number of lines.
        max_iters: Cap on assignment/refit rounds.
        history: If given, receives the total squared orthogonal error after
            every refit of the returned run.

    Returns:
        List of ``(Line2D, members)`` where ``members`` is an ``(n_j, 2)``
        array; every cluster keeps at least two points.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(p) < 2 * k:
        raise ValueError(f"k-means lines with k={k} needs at least {2 * k} points, got {len(p)}")
    if k == 1:
        line, mse = fit_line_tls(p)
        if history is not None:
            history.append(mse * len(p))
        return [(line, p)]
    best = None
    for lab in _initial_partitions(p, k):
        lines, labels, hist = _run_kmeans_lines(p, lab, k, max_iters)
        if best is None or hist[-1] < best[2][-1] - 1e-9 * max(1.0, best[2][-1]):
            best = (lines, labels, hist)
    lines, labels, hist = best
    if history is not None:
        history.extend(hist)
    return [(lines[j], p[labels == j]) for j in range(k)]


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise (in y-up terms) hull vertices by Andrew's monotone chain."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for q in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(tuple(q))
    for q in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(tuple(q))
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(vertices) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle with half extents ``a >= b`` and long axis at ``angle`` in ``[0, pi)``."""

    center: tuple[float, float]
    half_extents: tuple[float, float]
    angle: float

    @property
    def area(self) -> float:
        return 4.0 * self.half_extents[0] * self.half_extents[1]

    @property
    def axis(self) -> tuple[float, float]:
        return (math.cos(self.angle), math.sin(self.angle))

    def corners(self) -> np.ndarray:
        (cx, cy), (a, b) = self.center, self.half_extents
        ux, uy = self.axis
        vx, vy = -uy, ux
        return np.array(
            [
                (cx + sa * a * ux + sb * b * vx, cy + sa * a * uy + sb * b * vy)
                for sa, sb in ((1, 1), (-1, 1), (-1, -1), (1, -1))
            ]
        )


def pixel_corner_points(pixels) -> np.ndarray:
    """Corners of the unit squares of the extreme pixels in each row.

    Their convex hull equals the hull of the full pixel area.
    """
    pix = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    ys = pix[:, 1]
    uniq, inv = np.unique(ys, return_inverse=True)
    xmin = np.full(len(uniq), np.iinfo(np.int64).max)
    xmax = np.full(len(uniq), np.iinfo(np.int64).min)
    np.minimum.at(xmin, inv, pix[:, 0])
    np.maximum.at(xmax, inv, pix[:, 0])
    pts = []
    for xs in (xmin, xmax):
        for ox in (-0.5, 0.5):
            for oy in (-0.5, 0.5):
                pts.append(np.stack([xs + ox, uniq + oy], axis=1))
    return np.concatenate(pts)


def min_area_rect_points(points) -> OrientedRect:
    """Minimum-area enclosing rectangle of a point set by rotating calipers.

    One side of the optimum is collinear with a hull edge, so the calipers
    visit each edge once while three support pointers advance monotonically.
    """
    hull = convex_hull(points)
    n = len(hull)
    if n == 0:
        raise ValueError("no points")
    if n == 1:
        return OrientedRect((hull[0, 0], hull[0, 1]), (0.0, 0.0), 0.0)
    if n == 2:
        d = hull[1] - hull[0]
        c = hull.mean(axis=0)
        return OrientedRect((c[0], c[1]), (float(np.hypot(*d)) / 2, 0.0), math.atan2(d[1], d[0]) % math.pi)

    def proj(i, u):
        return hull[i % n, 0] * u[0] + hull[i % n, 1] * u[1]

    best = None
    j = k = m = None
    for i in range(n):
        e = hull[(i + 1) % n] - hull[i]
        u = e / np.hypot(*e)
        v = np.array([-u[1], u[0]])  # points into the hull for a CCW hull
        if j is None:
            j = i + 1
            while proj(j + 1, u) > proj(j, u) + 1e-12:
                j += 1
            k = j
            while proj(k + 1, v) > proj(k, v) + 1e-12:
                k += 1
            m = k
            while proj(m + 1, u) < proj(m, u) - 1e-12:
                m += 1
        else:
            while proj(j + 1, u) > proj(j, u) + 1e-12:
                j += 1
            if k < j:
                k = j
            while proj(k + 1, v) > proj(k, v) + 1e-12:
                k += 1
            if m < k:
                m = k
            while proj(m + 1, u) < proj(m, u) - 1e-12:
                m += 1
        base_v = proj(i, v)
        umax, umin = proj(j, u), proj(m, u)
        vmax = proj(k, v)
        width, height = umax - umin, vmax - base_v
        area = width * height
        if best is None or area < best[0] - 1e-9:
            cu = 0.5 * (umax + umin)
            cv = base_v + 0.5 * height
            center = cu * u + cv * v
            best = (area, center, width, height, u)
    _, center, width, height, u = best
    if width >= height:
        a, b, axis = width / 2, height / 2, u
    else:
        a, b, axis = height / 2, width / 2, np.array([-u[1], u[0]])
    angle = math.atan2(axis[1], axis[0]) % math.pi
    return OrientedRect((float(center[0]), float(center[1])), (float(a), float(b)), angle)


def min_area_rect(region) -> OrientedRect:
    """Minimum-area rectangle enclosing every pixel square of a region.

    Pixels are treated as unit squares, so a one-pixel-wide region yields
    ``b = 0.5``.
    """
    pixels = region.pixels if hasattr(region, "pixels") else region
    return min_area_rect_points(pixel_corner_points(pixels))
