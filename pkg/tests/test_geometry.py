import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egohand.geometry import (
    Line2D,
    convex_hull,
    fit_line_tls,
    kmeans_lines,
    min_area_rect,
    min_area_rect_points,
    pixel_corner_points,
    polygon_area,
)

from oracles import pair_direction_rect_area, sweep_line_mse, sweep_rect_area


def angle_gap(a, b):
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def test_line_direction_is_canonical():
    assert Line2D((0, 0), (-3, -4)) == Line2D((0, 0), (3, 4))
    assert Line2D((0, 0), (0, -2)).direction == (0.0, 1.0)
    with pytest.raises(ValueError):
        Line2D((0, 0), (0, 0))


def test_tls_on_exact_line():
    pts = [(x, 2 * x) for x in range(-5, 6)]
    line, mse = fit_line_tls(pts)
    assert mse == pytest.approx(0, abs=1e-12)
    np.testing.assert_allclose(line.direction, np.array([1, 2]) / math.sqrt(5), atol=1e-12)
    np.testing.assert_allclose(line.point, (0, 0), atol=1e-12)


def test_tls_square_corners():
    _, mse = fit_line_tls([(0, 0), (2, 0), (0, 2), (2, 2)])
    assert mse == pytest.approx(1.0)


def test_tls_needs_two_distinct_points():
    with pytest.raises(ValueError):
        fit_line_tls([(1, 1)])
    with pytest.raises(ValueError):
        fit_line_tls([(1, 1), (1, 1)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * math.pi), st.floats(-50, 50), st.floats(-50, 50))
def test_tls_is_rigid_motion_invariant(seed, theta, tx, ty):
    p = np.random.default_rng(seed).normal(size=(30, 2)) * (4, 1)
    _, mse = fit_line_tls(p)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    _, mse2 = fit_line_tls(p @ rot.T + (tx, ty))
    assert mse2 == pytest.approx(mse, rel=1e-9, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tls_matches_angular_sweep(seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(40, 2)) * rng.uniform(0.2, 5, size=2)
    _, mse = fit_line_tls(p)
    sweep = sweep_line_mse(p)
    # The sweep is a grid minimum, so it can only overshoot the true optimum.
    assert mse <= sweep + 1e-12
    assert sweep - mse <= 1e-4 * max(1.0, mse)


def crossing_points(theta1, theta2, sigma, rng, n=80, length=40):
    out = []
    for th in (theta1, theta2):
        t = np.linspace(-length, length, n)
        u = np.array([math.cos(th), math.sin(th)])
        pts = t[:, None] * u + rng.normal(0, sigma, size=(n, 2))
        out.append(pts)
    return out


def test_kmeans_recovers_coordinate_axes():
    xs = np.concatenate([np.arange(-10, 0), np.arange(1, 11)])
    zero = np.zeros_like(xs)
    pts = np.concatenate([np.stack([xs, zero], 1), np.stack([zero, xs], 1)])
    out = kmeans_lines(pts, 2)
    angles = sorted(ln.angle for ln, _ in out)
    assert angles[0] == pytest.approx(0, abs=1e-6)
    assert angles[1] == pytest.approx(math.pi / 2, abs=1e-6)
    assert sorted(len(m) for _, m in out) == [20, 20]


def test_kmeans_with_one_line_equals_tls():
    p = np.random.default_rng(0).normal(size=(25, 2))
    ((line, members),) = kmeans_lines(p, 1)
    assert line == fit_line_tls(p)[0]
    assert len(members) == 25


def test_kmeans_collinear_points_give_two_zero_error_lines():
    p = np.stack([np.arange(40.0), 3 * np.arange(40.0) + 1], 1)
    hist = []
    out = kmeans_lines(p, 2, history=hist)
    assert all(len(m) >= 2 for _, m in out)
    assert hist[-1] == pytest.approx(0, abs=1e-9)
    expect = math.atan2(3, 1)
    assert all(angle_gap(ln.angle, expect) < 1e-6 for ln, _ in out)


def test_kmeans_rejects_too_few_points():
    with pytest.raises(ValueError):
        kmeans_lines([(0, 0), (1, 1), (2, 0)], 2)


def test_kmeans_crossing_lines_within_two_degrees():
    rng = np.random.default_rng(4)
    a, b = crossing_points(math.radians(20), math.radians(75), 0.5, rng)
    out = kmeans_lines(np.concatenate([a, b]), 2)
    got = sorted(ln.angle for ln, _ in out)
    assert math.degrees(angle_gap(got[0], math.radians(20))) < 2
    assert math.degrees(angle_gap(got[1], math.radians(75))) < 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kmeans_error_history_never_increases(seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(60, 2)) * rng.uniform(1, 10, size=2)
    hist = []
    out = kmeans_lines(p, 2, history=hist)
    assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(hist, hist[1:]))
    assert sum(len(m) for _, m in out) == 60
    assert all(len(m) >= 2 for _, m in out)


def test_hull_of_square_with_interior_points():
    pts = [(0, 0), (4, 0), (4, 4), (0, 4), (2, 2), (1, 3), (2, 0)]
    hull = convex_hull(pts)
    assert sorted(map(tuple, hull.tolist())) == [(0, 0), (0, 4), (4, 0), (4, 4)]
    assert polygon_area(hull) == pytest.approx(16)


def rect_pixels(w, h, theta=0.0, cx=0.0, cy=0.0):
    """Pixels whose centres fall inside a rotated w x h rectangle."""
    r = int(math.ceil(math.hypot(w, h)))
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1]
    u = xs * math.cos(theta) + ys * math.sin(theta)
    v = -xs * math.sin(theta) + ys * math.cos(theta)
    keep = (np.abs(u) <= w / 2) & (np.abs(v) <= h / 2)
    return np.stack([xs[keep] + int(cx), ys[keep] + int(cy)], 1)


def test_axis_aligned_pixel_rectangle():
    pix = [(x, y) for x in range(10) for y in range(4)]
    r = min_area_rect(pix)
    assert r.half_extents == pytest.approx((5, 2))
    assert r.center == pytest.approx((4.5, 1.5))
    assert r.angle == pytest.approx(0, abs=1e-9) or r.angle == pytest.approx(math.pi, abs=1e-9)


def test_single_pixel_rect():
    r = min_area_rect([(3, 7)])
    assert r.half_extents == pytest.approx((0.5, 0.5))
    assert r.area == pytest.approx(1)


def test_collinear_region_has_half_pixel_width():
    r = min_area_rect([(x, 4) for x in range(3, 13)])
    assert r.half_extents == pytest.approx((5, 0.5))
    r = min_area_rect([(x, x) for x in range(8)])
    assert r.half_extents[1] > 0
    assert r.angle == pytest.approx(math.pi / 4)


def test_rotated_point_rectangle_is_recovered():
    theta = math.radians(30)
    u = np.array([math.cos(theta), math.sin(theta)])
    v = np.array([-u[1], u[0]])
    corners = [sa * 20 * u + sb * 5 * v for sa in (-1, 1) for sb in (-1, 1)]
    rng = np.random.default_rng(0)
    inner = rng.uniform(-1, 1, size=(50, 2)) * (20, 5)
    pts = np.concatenate([corners, inner[:, :1] * u + inner[:, 1:] * v]) + (100, 50)
    r = min_area_rect_points(pts)
    assert r.half_extents == pytest.approx((20, 5))
    assert r.angle == pytest.approx(theta)
    assert r.center == pytest.approx((100, 50))


def test_rotated_pixel_rectangle_angle():
    pix = rect_pixels(60, 12, math.radians(30))
    r = min_area_rect(pix)
    assert math.degrees(angle_gap(r.angle, math.radians(30))) < 2
    assert r.half_extents[0] >= r.half_extents[1]


def test_corners_span_the_rectangle():
    r = min_area_rect_points([(0, 0), (6, 0), (6, 2), (0, 2)])
    assert polygon_area(r.corners()) == pytest.approx(r.area) == pytest.approx(12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rect_encloses_pixels_and_is_optimal(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(4, 30), rng.uniform(2, 10)
    th = rng.uniform(0, math.pi)
    ys, xs = np.mgrid[-35:36, -35:36]
    u = xs * math.cos(th) + ys * math.sin(th)
    v = -xs * math.sin(th) + ys * math.cos(th)
    keep = (u / a) ** 2 + (v / b) ** 2 <= 1
    if keep.sum() < 3:
        return
    pix = np.stack([xs[keep], ys[keep]], 1)
    r = min_area_rect(pix)
    pts = pixel_corner_points(pix)
    hull_area = polygon_area(convex_hull(pts))
    assert r.area >= hull_area - 1e-9
    sweep = sweep_rect_area(pts)
    assert r.area <= sweep + 1e-9
    assert r.area == pytest.approx(pair_direction_rect_area(pts), rel=1e-9)
    # Every pixel corner lies inside the rectangle.
    d = pts - r.center
    ax = np.array(r.axis)
    perp = np.array([-ax[1], ax[0]])
    assert np.all(np.abs(d @ ax) <= r.half_extents[0] + 1e-9)
    assert np.all(np.abs(d @ perp) <= r.half_extents[1] + 1e-9)
    assert 0 <= r.angle < math.pi
