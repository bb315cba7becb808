"""Synthetic egocentric frames with known skin masks and hand boxes.

Arms enter from the lower frame edge and end in a palm with four fingers
and a thumb, over textured backgrounds drawn from non-skin hues.  Used by
the test suite, the acceptance run and ``egohand synth``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SKIN_TONES = np.array(
    [
        (224, 172, 140),
        (205, 150, 120),
        (236, 188, 160),
        (190, 135, 105),
        (215, 160, 125),
    ],
    dtype=np.float64,
)

BACKGROUND_COLORS = np.array(
    [
        (40, 70, 160),
        (60, 110, 200),
        (50, 140, 90),
        (30, 90, 60),
        (90, 60, 140),
        (70, 90, 110),
        (40, 130, 150),
        (110, 130, 170),
        (25, 35, 60),
    ],
    dtype=np.float64,
)


@dataclass
class SyntheticFrame:
    image: np.ndarray
    mask: np.ndarray
    boxes: list[tuple[int, int, int, int]] = field(default_factory=list)
    hands_present: bool = False
    joined: bool = False


def _segment_mask(xx, yy, p0, p1, half_width):
    p0 = np.asarray(p0, dtype=np.float64)
    d = np.asarray(p1, dtype=np.float64) - p0
    L = math.hypot(*d)
    u = d / L
    rx, ry = xx - p0[0], yy - p0[1]
    t = rx * u[0] + ry * u[1]
    n = -rx * u[1] + ry * u[0]
    return (t >= 0) & (t <= L) & (np.abs(n) <= half_width)


def _ellipse_mask(xx, yy, c, u, a, b):
    rx, ry = xx - c[0], yy - c[1]
    t = rx * u[0] + ry * u[1]
    n = -rx * u[1] + ry * u[0]
    return (t / a) ** 2 + (n / b) ** 2 <= 1.0


def _bbox(mask):
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return None
    return (int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))


def textured_background(rng, height, width):
    base = BACKGROUND_COLORS[rng.integers(len(BACKGROUND_COLORS))]
    img = np.broadcast_to(base, (height, width, 3)).copy()
    yy, xx = np.mgrid[:height, :width].astype(np.float64)
    for _ in range(rng.integers(1, 4)):
        th = rng.uniform(0, math.pi)
        freq = rng.uniform(0.05, 0.3)
        amp = rng.uniform(5, 20)
        img += amp * np.sin(freq * (xx * math.cos(th) + yy * math.sin(th)) + rng.uniform(0, 6.3))[..., None]
    for _ in range(rng.integers(2, 7)):
        col = BACKGROUND_COLORS[rng.integers(len(BACKGROUND_COLORS))]
        x0, y0 = rng.integers(0, width), rng.integers(0, height)
        w, h = rng.integers(10, width // 2), rng.integers(10, height // 2)
        img[y0 : y0 + h, x0 : x0 + w] = col
    img += rng.normal(0, 6, size=img.shape)
    return img


def _draw_hand(xx, yy, start, target, radius, arm_half, side):
    """Masks (arm + hand, hand only) for one arm reaching ``target``."""
    start = np.asarray(start, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    u = (target - start) / np.hypot(*(target - start))
    v = np.array([-u[1], u[0]])
    palm = _ellipse_mask(xx, yy, target, u, 1.05 * radius, radius)
    hand = palm.copy()
    base = target + 0.55 * radius * u
    for off in np.linspace(-0.72, 0.72, 4):
        p0 = base + off * radius * v
        length = radius * (0.95 - 0.25 * abs(off))
        hand |= _segment_mask(xx, yy, p0, p0 + length * u, 0.21 * radius)
    thumb_dir = math.cos(1.0) * u + side * math.sin(1.0) * v
    hand |= _segment_mask(xx, yy, target, target + 1.25 * radius * thumb_dir, 0.24 * radius)
    wrist = target - 0.7 * radius * u
    arm = _segment_mask(xx, yy, start - 25 * u, wrist, arm_half)
    return arm | hand, hand


def make_scene(
    rng,
    height: int = 180,
    width: int = 240,
    p_hands: float = 0.8,
    p_two: float = 0.5,
    p_joined: float = 0.25,
    p_distractor: float = 0.25,
) -> SyntheticFrame:
    """One random frame.

    Hands-present frames carry one or two arms; with probability
    ``p_joined`` two arms meet so that their hands touch and form a single
    skin blob.  Distractors are skin-coloured rectangles that are part of
    the skin mask but are not hands.
    """
    img = textured_background(rng, height, width)
    yy, xx = np.mgrid[:height, :width].astype(np.float64)
    tone = SKIN_TONES[rng.integers(len(SKIN_TONES))] * rng.uniform(0.9, 1.08)
    skin = np.zeros((height, width), dtype=bool)
    boxes = []
    joined = False
    present = rng.random() < p_hands
    cx, cy = width / 2.0, height / 2.0
    radius = rng.uniform(12.0, 16.0)
    if present:
        two = rng.random() < p_two
        joined = two and rng.random() < p_joined
        sides = [-1, 1] if two else [int(rng.choice([-1, 1]))]
        for side in sides:
            r = radius * rng.uniform(0.92, 1.08)
            if joined:
                tx = cx + side * r * rng.uniform(0.9, 1.2)
                ty = cy + rng.uniform(-10, 15)
            else:
                tx = cx + side * rng.uniform(0.12, 0.3) * width
                ty = cy + rng.uniform(-0.15, 0.1) * height
            sx = cx + side * rng.uniform(0.25, 0.5) * width
            start = (sx, height + 5.0)
            arm_hand, hand = _draw_hand(xx, yy, start, (tx, ty), r, r * rng.uniform(0.6, 0.72), -side)
            skin |= arm_hand
            box = _bbox(hand)
            if box is not None:
                boxes.append(box)
    if rng.random() < p_distractor:
        for _ in range(20):
            c = np.array([rng.uniform(30, width - 30), rng.uniform(20, 0.45 * height)])
            th = rng.uniform(0, math.pi)
            u = np.array([math.cos(th), math.sin(th)])
            v = np.array([-u[1], u[0]])
            a, b = rng.uniform(14, 24), rng.uniform(9, 14)
            rx, ry = xx - c[0], yy - c[1]
            rect = (np.abs(rx * u[0] + ry * u[1]) <= a) & (np.abs(rx * v[0] + ry * v[1]) <= b)
            m = a + b + 10
            x0, y0 = max(int(c[0] - m), 0), max(int(c[1] - m), 0)
            if not skin[y0 : int(c[1] + m), x0 : int(c[0] + m)].any():
                skin |= rect
                break
    shade = 1.0 + 0.08 * np.sin(xx / rng.uniform(15, 40) + rng.uniform(0, 6.3))
    skin_img = tone[None, None, :] * shade[..., None] + rng.normal(0, 4, size=img.shape)
    img = np.where(skin[..., None], skin_img, img)
    image = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return SyntheticFrame(image, skin, boxes, present and bool(boxes), joined)


def make_two_tone_frame(rng, height: int = 48, width: int = 64):
    """Left half skin-toned, right half blue; returns ``(image, mask)``."""
    tone = SKIN_TONES[rng.integers(len(SKIN_TONES))] * rng.uniform(0.9, 1.08)
    blue = np.array([rng.uniform(20, 80), rng.uniform(40, 120), rng.uniform(150, 240)])
    img = np.empty((height, width, 3))
    half = width // 2
    img[:, :half] = tone
    img[:, half:] = blue
    img += rng.normal(0, 3, size=img.shape)
    mask = np.zeros((height, width), dtype=bool)
    mask[:, :half] = True
    return np.clip(np.round(img), 0, 255).astype(np.uint8), mask


def make_dataset(seed: int, n: int, **kwargs) -> list[SyntheticFrame]:
    rng = np.random.default_rng(seed)
    return [make_scene(rng, **kwargs) for _ in range(n)]
