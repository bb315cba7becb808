import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from egohand.raster import (
    Blob,
    connected_components,
    distance_transform,
    read_image,
    read_mask,
    trace_contour,
    watershed_split,
    write_image,
    write_mask,
)

from oracles import brute_distance, flood_fill_components, local_maxima_count


def disc_mask(shape, centers, radius):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    m = np.zeros(shape, dtype=bool)
    for cx, cy in centers:
        m |= (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2
    return m


def test_empty_mask_has_no_components():
    assert connected_components(np.zeros((4, 4), dtype=bool), 1) == []


def test_single_pixel_component():
    m = np.zeros((5, 5), dtype=bool)
    m[2, 2] = True
    (b,) = connected_components(m, 1)
    assert b.area == 1
    assert b.centroid == (2.0, 2.0)
    assert b.contour.tolist() == [[2, 2]]


def test_two_squares_separated_by_a_column():
    m = np.zeros((5, 9), dtype=bool)
    m[1:4, 1:4] = True
    m[1:4, 5:8] = True
    blobs = connected_components(m, 1)
    expected = flood_fill_components(m)
    assert [b.area for b in blobs] == [9, 9]
    assert [sorted(map(tuple, b.pixels.tolist())) for b in blobs] == expected


def test_diagonal_pixels_are_one_component():
    m = np.eye(4, dtype=bool)
    assert len(connected_components(m, 1)) == 1


def test_min_area_filters_small_components():
    m = np.zeros((6, 6), dtype=bool)
    m[0, 0] = True
    m[3:6, 3:6] = True
    assert [b.area for b in connected_components(m, 2)] == [9]


def test_contour_is_clockwise_from_top_left():
    m = np.zeros((4, 4), dtype=bool)
    m[1:3, :] = True
    m[0, 1] = True
    c = trace_contour(m).tolist()
    assert c[0] == [1, 0]
    assert c == [[1, 0], [2, 1], [3, 1], [3, 2], [2, 2], [1, 2], [0, 2], [0, 1]]


def test_contour_of_square_visits_every_border_pixel_once():
    m = np.zeros((7, 7), dtype=bool)
    m[1:6, 1:6] = True
    c = trace_contour(m)
    border = {(x, y) for x in range(1, 6) for y in range(1, 6) if x in (1, 5) or y in (1, 5)}
    assert len(c) == len(border) == 16
    assert set(map(tuple, c.tolist())) == border


def test_contour_walks_thin_bridge_both_ways():
    m = np.zeros((3, 7), dtype=bool)
    m[1, :] = True
    c = trace_contour(m).tolist()
    # A one-pixel line is traced out and back.
    assert c[0] == [0, 1]
    assert len(c) == 12
    assert set(map(tuple, c)) == {(x, 1) for x in range(7)}


@settings(max_examples=60, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_components_match_flood_fill(mask):
    blobs = connected_components(mask, 1)
    got = sorted(sorted(map(tuple, b.pixels.tolist())) for b in blobs)
    assert got == sorted(flood_fill_components(mask))
    for b in blobs:
        assert np.allclose(b.centroid, b.pixels.mean(axis=0))
        # Contour pixels belong to the blob.
        pix = set(map(tuple, b.pixels.tolist()))
        assert set(map(tuple, b.contour.tolist())) <= pix


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(1, 3), st.integers(1, 3)), max_size=5))
def test_painting_blobs_round_trips(rects):
    # Rectangles of side <= 3 on a 5-pixel lattice never touch, even diagonally.
    shape = (28, 28)
    m = np.zeros(shape, dtype=bool)
    placed = set()
    truth = []
    for gx, gy, w, h in rects:
        if (gx, gy) in placed:
            continue
        placed.add((gx, gy))
        x0, y0 = gx * 5, gy * 5
        m[y0 : y0 + h, x0 : x0 + w] = True
        truth.append(sorted((x, y) for x in range(x0, x0 + w) for y in range(y0, y0 + h)))
    blobs = connected_components(m, 1)
    assert sorted(sorted(map(tuple, b.pixels.tolist())) for b in blobs) == sorted(truth)
    repainted = np.zeros(shape, dtype=bool)
    for b in blobs:
        repainted |= b.to_mask(shape)
    assert np.array_equal(connected_components(repainted, 1), blobs)


def test_distance_of_empty_mask_is_zero():
    assert not distance_transform(np.zeros((5, 6), dtype=bool)).any()


def test_distance_of_single_pixel_is_one():
    m = np.zeros((5, 5), dtype=bool)
    m[2, 2] = True
    assert distance_transform(m)[2, 2] == pytest.approx(1.0)


def test_distance_solid_square_counts_border_as_background():
    m = np.ones((7, 7), dtype=bool)
    d = distance_transform(m)
    assert d[3, 3] == pytest.approx(brute_distance(m)[3, 3]) == pytest.approx(4.0)


@settings(max_examples=30, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 64), st.integers(1, 64))))
def test_distance_matches_brute_force(mask):
    np.testing.assert_allclose(distance_transform(mask), brute_distance(mask), atol=1e-6)


def test_watershed_keeps_disc_whole():
    m = disc_mask((41, 41), [(20, 20)], 12)
    (b,) = connected_components(m, 1)
    assert watershed_split(b, distance_transform(m), 2.0) == [b]


def test_watershed_splits_two_overlapping_discs():
    # Radius-10 discs whose centres are 16 px apart overlap by 4 px.
    m = disc_mask((40, 60), [(20, 20), (36, 20)], 10)
    (b,) = connected_components(m, 1)
    d = distance_transform(m)
    assert local_maxima_count(np.round(d, 6), m) == 2
    subs = watershed_split(b, d, 1.0)
    assert len(subs) == 2
    assert sum(s.area for s in subs) == b.area
    union = np.concatenate([s.pixels for s in subs])
    assert len({tuple(p) for p in union.tolist()}) == b.area
    left = min(subs, key=lambda s: s.centroid[0])
    assert left.centroid[0] < 28 < max(s.centroid[0] for s in subs)


def test_watershed_h_suppresses_shallow_second_peak():
    m = disc_mask((40, 60), [(20, 20), (36, 20)], 10)
    (b,) = connected_components(m, 1)
    # The neck between the discs is about 4 px lower than the peaks.
    assert len(watershed_split(b, distance_transform(m), 6.0)) == 1


def test_watershed_rejects_nonpositive_h():
    m = disc_mask((21, 21), [(10, 10)], 5)
    (b,) = connected_components(m, 1)
    with pytest.raises(ValueError):
        watershed_split(b, distance_transform(m), 0.0)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(8, 52), st.integers(8, 52)), min_size=1, max_size=5),
    st.integers(3, 8),
    st.floats(0.5, 3.0),
)
def test_watershed_output_is_partition(centers, radius, h):
    m = disc_mask((60, 60), centers, radius)
    d = distance_transform(m)
    for b in connected_components(m, 1):
        subs = watershed_split(b, d, h)
        pix = [tuple(p) for s in subs for p in s.pixels.tolist()]
        assert len(pix) == len(set(pix)) == b.area
        assert set(pix) == set(map(tuple, b.pixels.tolist()))


def test_watershed_is_deterministic():
    m = disc_mask((50, 70), [(20, 25), (35, 25), (48, 30)], 9)
    (b,) = connected_components(m, 1)
    d = distance_transform(m)
    first = watershed_split(b, d, 1.0)
    second = watershed_split(b, d, 1.0)
    assert first == second


def test_blob_rejects_empty_and_is_immutable():
    with pytest.raises(ValueError):
        Blob(np.zeros((0, 2), dtype=int), np.zeros((0, 2), dtype=int))
    b = Blob.from_pixels([(1, 1), (2, 1)])
    with pytest.raises(ValueError):
        b.pixels[0, 0] = 5


def test_image_and_mask_io_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(9, 11, 3), dtype=np.uint8)
    write_image(tmp_path / "f.png", img)
    assert np.array_equal(read_image(tmp_path / "f.png"), img)
    mask = rng.random((9, 11)) > 0.5
    write_mask(tmp_path / "f_mask.png", mask)
    from PIL import Image

    raw = np.asarray(Image.open(tmp_path / "f_mask.png"))
    assert set(np.unique(raw)) <= {0, 255}
    assert np.array_equal(read_mask(tmp_path / "f_mask.png"), mask)


def test_read_jpeg(tmp_path):
    from PIL import Image

    img = np.full((8, 8, 3), 128, dtype=np.uint8)
    Image.fromarray(img).save(tmp_path / "f.jpg", quality=95)
    out = read_image(tmp_path / "f.jpg")
    assert out.shape == (8, 8, 3)
    assert np.abs(out.astype(int) - 128).max() <= 2
