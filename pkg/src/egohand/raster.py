"""Image and mask primitives: components, contours, distance transform, watershed.

Frames are ``(H, W, 3)`` uint8 RGB arrays and masks are ``(H, W)`` bool
arrays.  Pixel coordinates are always ``(x, y)`` with ``x`` the column.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage.morphology import local_maxima, reconstruction

EIGHT = np.ones((3, 3), dtype=bool)

# Moore neighbourhood, clockwise on screen (y grows downward), starting west.
_MOORE = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Blob:
    """One connected skin region.

    Attributes:
        pixels: ``(N, 2)`` int array of ``(x, y)`` in row-major order.
        contour: ``(M, 2)`` int array, outer boundary traced clockwise from
            the topmost-leftmost pixel.
        area: Pixel count.
        centroid: Mean ``(x, y)`` of the pixels.
    """

    pixels: np.ndarray
    contour: np.ndarray
    area: int = field(init=False)
    centroid: tuple[float, float] = field(init=False)

    def __post_init__(self):
        if len(self.pixels) == 0:
            raise ValueError("a blob needs at least one pixel")
        object.__setattr__(self, "pixels", _frozen(self.pixels.astype(np.int64)))
        object.__setattr__(self, "contour", _frozen(self.contour.astype(np.int64)))
        object.__setattr__(self, "area", int(len(self.pixels)))
        c = self.pixels.mean(axis=0)
        object.__setattr__(self, "centroid", (float(c[0]), float(c[1])))

    @classmethod
    def from_pixels(cls, pixels) -> "Blob":
        """Build a blob from ``(x, y)`` pixels, sorting them and tracing the contour."""
        pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((pixels[:, 0], pixels[:, 1]))
        pixels = pixels[order]
        x0, y0 = pixels.min(axis=0)
        x1, y1 = pixels.max(axis=0)
        local = np.zeros((y1 - y0 + 1, x1 - x0 + 1), dtype=bool)
        local[pixels[:, 1] - y0, pixels[:, 0] - x0] = True
        contour = trace_contour(local) + np.array([x0, y0])
        return cls(pixels, contour)

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """Half-open axis-aligned box ``(x, y, w, h)``."""
        x0, y0 = self.pixels.min(axis=0)
        x1, y1 = self.pixels.max(axis=0)
        return int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1)

    def to_mask(self, shape: tuple[int, int]) -> np.ndarray:
        mask = np.zeros(shape, dtype=bool)
        mask[self.pixels[:, 1], self.pixels[:, 0]] = True
        return mask

    def __eq__(self, other):
        if not isinstance(other, Blob):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels) and np.array_equal(
            self.contour, other.contour
        )

    __hash__ = None


def trace_contour(mask: np.ndarray) -> np.ndarray:
    """Moore boundary tracing of the component holding the topmost-leftmost pixel.

    Returns an ``(M, 2)`` array of ``(x, y)`` boundary pixels, clockwise,
    starting at the topmost-leftmost foreground pixel.  Tracing stops when
    the start pixel is re-entered from the initial backtrack direction
    (Jacob's criterion), so thin one-pixel bridges are walked both ways.
    """
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    padded = np.pad(mask, 1, constant_values=False)
    start = (int(xs[0]) + 1, int(ys[0]) + 1)  # row-major first = topmost-leftmost
    contour = [start]
    # Entered the start pixel from its western (background) neighbour.
    p, back = start, 0
    first_move = None
    while True:
        for i in range(1, 9):
            d = (back + i) % 8
            qx, qy = p[0] + _MOORE[d][0], p[1] + _MOORE[d][1]
            if padded[qy, qx]:
                break
        else:
            break  # isolated pixel
        # Backtrack = the neighbour examined just before q, seen from q.
        prev = (back + i - 1) % 8
        bx, by = p[0] + _MOORE[prev][0], p[1] + _MOORE[prev][1]
        q = (qx, qy)
        move = (p, q)
        if first_move is None:
            first_move = move
        elif move == first_move:
            contour.pop()  # the start pixel was appended again
            break
        back = _MOORE.index((bx - qx, by - qy))
        p = q
        contour.append(p)
    return np.array(contour, dtype=np.int64) - 1


def connected_components(mask: np.ndarray, min_area: int = 1) -> list[Blob]:
    """8-connected foreground components with at least ``min_area`` pixels.

    Components are ordered by their first pixel in row-major order.
    """
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=EIGHT)
    blobs = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        local = labels[sl] == idx
        count = int(local.sum())
        if count < min_area:
            continue
        ys, xs = np.nonzero(local)
        oy, ox = sl[0].start, sl[1].start
        pixels = np.stack([xs + ox, ys + oy], axis=1)
        contour = trace_contour(local) + np.array([ox, oy])
        blobs.append(Blob(pixels, contour))
    return blobs


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance of every foreground pixel to the nearest background pixel.

    Pixels outside the image count as background, so a fully set mask still
    peaks in its middle.
    """
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def h_maxima_markers(values: np.ndarray, domain: np.ndarray, h: float) -> tuple[np.ndarray, int]:
    """Label the h-maxima of ``values`` inside ``domain``.

    The h-maxima are the regional maxima of the greyscale reconstruction of
    ``values - h`` under ``values``: every peak shallower than ``h`` is
    flattened into its surroundings before maxima are taken.
    """
    floor = -1e9
    f = np.where(domain, values, floor)
    rec = reconstruction(f - h, f, method="dilation", footprint=EIGHT)
    peaks = local_maxima(rec, connectivity=2, allow_borders=True) & domain
    return ndimage.label(peaks, structure=EIGHT)


def watershed_split(blob: Blob, dist: np.ndarray, h: float = 2.0) -> list[Blob]:
    """Split a blob into basins of its distance transform.

    Seeds are the h-maxima of ``dist`` over the blob; pixels are flooded in
    order of decreasing distance, each taking the label of the neighbour that
    reached it first.  The result always partitions ``blob.pixels``.

    Args:
        blob: Region to split.
        dist: Distance map covering at least the blob's bounding box,
            indexed ``dist[y, x]``.
        h: Minimum peak depth for a maximum to seed its own basin.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x0, y0, w, hgt = blob.bbox
    # One-pixel margin keeps 8-neighbour lookups in bounds.
    domain = np.zeros((hgt + 2, w + 2), dtype=bool)
    lx = blob.pixels[:, 0] - x0 + 1
    ly = blob.pixels[:, 1] - y0 + 1
    domain[ly, lx] = True
    values = np.zeros(domain.shape, dtype=np.float64)
    values[ly, lx] = dist[blob.pixels[:, 1], blob.pixels[:, 0]]

    markers, n = h_maxima_markers(values, domain, h)
    if n <= 1:
        return [blob]

    labels = markers.astype(np.int64)
    heap = []
    counter = 0
    for y, x in zip(*np.nonzero(labels)):
        heapq.heappush(heap, (-values[y, x], counter, int(y), int(x)))
        counter += 1
    while heap:
        _, _, y, x = heapq.heappop(heap)
        lab = labels[y, x]
        for dx, dy in _MOORE:
            ny, nx = y + dy, x + dx
            if domain[ny, nx] and labels[ny, nx] == 0:
                labels[ny, nx] = lab
                heapq.heappush(heap, (-values[ny, nx], counter, ny, nx))
                counter += 1

    out = []
    pix_labels = labels[ly, lx]
    for lab in range(1, n + 1):
        sel = pix_labels == lab
        if sel.any():
            out.append(Blob.from_pixels(blob.pixels[sel]))
    return out


def disc(radius: int) -> np.ndarray:
    """Boolean disc structuring element of the given integer radius."""
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def read_image(path) -> np.ndarray:
    """Read an 8-bit PNG/JPEG as an ``(H, W, 3)`` RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_image(path, image: np.ndarray) -> None:
    """Write a uint8 RGB or greyscale array as PNG."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    """Read a greyscale mask PNG; any nonzero sample is foreground."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 0


def write_mask(path, mask: np.ndarray) -> None:
    """Write a mask as 8-bit greyscale PNG, 0 = background, 255 = foreground."""
    write_image(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))
