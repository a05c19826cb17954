"""Reflective-wall kinematics and the two synthetic sequence generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .io import DatasetFile


@dataclass(frozen=True)
class MotionSpec:
    """How objects are placed and moved.

    Positions are the top-left corner of each ``sprite_size`` box in ``(x, y)``
    order (``x`` is the column). ``speed_range`` bounds the speed in pixels per
    frame; the heading is uniform. ``velocity``/``position`` pin every object
    to a fixed start, which is handy for controlled experiments.
    """

    n_objects: int = 2
    sprite_size: int = 12
    speed_range: tuple[float, float] = (2.0, 4.0)
    seed: int = 0
    velocity: tuple[float, float] | None = None
    position: tuple[float, float] | None = None

    def __post_init__(self):
        if self.n_objects < 1 or self.sprite_size < 1:
            raise ConfigurationError("n_objects and sprite_size must be positive")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"speed_range {self.speed_range} must satisfy 0 <= lo <= hi")


def reflect(p: np.ndarray, limit) -> np.ndarray:
    """Fold unconstrained positions into ``[0, limit]`` as a ball bouncing between walls."""
    p = np.asarray(p, dtype=np.float64)
    limit = np.broadcast_to(np.asarray(limit, dtype=np.float64), p.shape)
    period = np.where(limit > 0, 2 * limit, 1.0)
    u = np.mod(p, period)
    return np.where(limit > 0, np.where(u <= limit, u, 2 * limit - u), 0.0)


def bounce_steps(p0: float, v: float, limit: float, steps: int) -> list[float]:
    """Step-by-step simulation: move, and mirror about any wall that was crossed."""
    out = [p0]
    p = p0
    for _ in range(steps - 1):
        p += v
        while p < 0 or p > limit:
            if p > limit:
                p, v = 2 * limit - p, -v
            if p < 0:
                p, v = -p, -v
        out.append(p)
    return out


def trajectories(spec: MotionSpec, n: int, t: int, hw: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Top-left positions ``(n, t, objects, 2)`` in ``(x, y)`` order."""
    h, w = hw
    s = spec.sprite_size
    if s > h or s > w:
        raise ConfigurationError(f"sprite size {s} does not fit a {h}x{w} frame")
    limit = np.array([w - s, h - s], dtype=np.float64)
    shape = (n, spec.n_objects, 2)
    if spec.position is not None:
        p0 = np.broadcast_to(np.asarray(spec.position, dtype=np.float64), shape)
    else:
        p0 = rng.random(shape) * limit
    if spec.velocity is not None:
        v = np.broadcast_to(np.asarray(spec.velocity, dtype=np.float64), shape)
    else:
        speed = rng.uniform(*spec.speed_range, size=shape[:2])
        theta = rng.uniform(0, 2 * np.pi, size=shape[:2])
        v = np.stack([speed * np.cos(theta), speed * np.sin(theta)], axis=-1)
    steps = np.arange(t, dtype=np.float64)[None, :, None, None]
    return reflect(p0[:, None] + v[:, None] * steps, limit)


# -- glyphs ----------------------------------------------------------------
# seven-segment layout: top, upper-left, upper-right, middle, lower-left, lower-right, bottom
_SEGMENTS = {
    0: "1110111", 1: "0010010", 2: "1011101", 3: "1011011", 4: "0111010",
    5: "1101011", 6: "1101111", 7: "1010010", 8: "1111111", 9: "1111011",
}


def glyph(digit: int, size: int = 12) -> np.ndarray:
    """A procedurally drawn ``size x size`` digit with 2-pixel strokes in [0, 1]."""
    if digit not in _SEGMENTS:
        raise ConfigurationError(f"no glyph for {digit!r}")
    g = np.zeros((size, size))
    m = max(1, size // 6)  # margin and stroke width
    top, mid, bot = m, size // 2 - m // 2, size - 2 * m
    left, right = m + 1, size - 2 * m - 1
    on = [c == "1" for c in _SEGMENTS[digit]]
    if on[0]:
        g[top:top + m, left:right + m] = 1
    if on[1]:
        g[top:mid + m, left:left + m] = 1
    if on[2]:
        g[top:mid + m, right:right + m] = 1
    if on[3]:
        g[mid:mid + m, left:right + m] = 1
    if on[4]:
        g[mid:bot + m, left:left + m] = 1
    if on[5]:
        g[mid:bot + m, right:right + m] = 1
    if on[6]:
        g[bot:bot + m, left:right + m] = 1
    return g


def gen_moving_digits(spec: MotionSpec, n: int, t: int, h: int = 64, w: int = 64) -> DatasetFile:
    """Glyphs sliding with wall reflection, composited by per-pixel max.

    Positions are rounded to whole pixels for rendering.
    """
    rng = np.random.default_rng(spec.seed)
    pos = trajectories(spec, n, t, (h, w), rng)
    digits = rng.integers(0, 10, size=(n, spec.n_objects))
    s = spec.sprite_size
    sprites = {d: glyph(d, s).astype(np.float32) for d in range(10)}
    out = np.zeros((n, t, 1, h, w), dtype=np.float32)
    ij = np.floor(pos + 0.5).astype(np.int64)
    for i in range(n):
        for k in range(t):
            frame = out[i, k, 0]
            for o in range(spec.n_objects):
                x, y = ij[i, k, o]
                np.maximum(frame[y:y + s, x:x + s], sprites[digits[i, o]], out=frame[y:y + s, x:x + s])
    return DatasetFile(out, normalized=True)


def gen_bouncing_blobs(spec: MotionSpec, n: int, t: int, h: int = 64, w: int = 64,
                       channels: int = 1) -> DatasetFile:
    """Unit-peak Gaussian blobs (sigma = sprite_size / 6) bouncing inside the frame.

    Each blob is centred in its sprite box and evaluated over the whole frame,
    so its mass only changes when the tails meet a wall. Every channel gets
    its own independently moving set of blobs.
    """
    rng = np.random.default_rng(spec.seed)
    s = spec.sprite_size
    sigma = s / 6.0
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    out = np.empty((n, t, channels, h, w), dtype=np.float32)
    for c in range(channels):
        centers = trajectories(spec, n, t, (h, w), rng) + s / 2.0  # (n, t, objects, 2)
        gx = np.exp(-((xs - centers[..., 0:1]) ** 2) / (2 * sigma**2))  # (n, t, o, w)
        gy = np.exp(-((ys - centers[..., 1:2]) ** 2) / (2 * sigma**2))  # (n, t, o, h)
        out[:, :, c] = (gy[..., :, None] * gx[..., None, :]).max(axis=2)
    return DatasetFile(out, normalized=True)
