"""Deterministic tile rasterization.

The cell rectangle is stretched onto a square pixel grid (north up) and each
chain edge is drawn with an integer midpoint line and a square brush. No
anti-aliasing, so output bytes depend only on the inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigError, FormatError, InputError

GRAYSCALE = "grayscale"
SPEED = "speed"
MODES = (GRAYSCALE, SPEED)

BACKGROUND = 255
INK = 0
MISSING_SPEED_COLOR = (0, 0, 255)

DEFAULT_SIZE = 640
DEFAULT_LINE_WIDTH = 2
DEFAULT_V_MAX = 35.0


@dataclass
class TileRaster:
    pixels: np.ndarray  # (height, width, channels) uint8
    mode: str = GRAYSCALE
    empty: bool = False

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return self.pixels.shape[2]

    def tobytes(self):
        return np.ascontiguousarray(self.pixels).tobytes()

    def ink_count(self):
        """Number of pixels that differ from the background in any channel."""
        return int(np.any(self.pixels != BACKGROUND, axis=2).sum())

    def replace(self, pixels):
        return TileRaster(np.ascontiguousarray(pixels, dtype=np.uint8), self.mode, self.empty)


def _round_half_away(x):
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def speed_to_color(speed, v_max=DEFAULT_V_MAX):
    """Red (stopped) to green (at or above ``v_max``); unknown speed is blue."""
    if not v_max > 0:
        raise ConfigError("v_max must be positive")
    if speed is None or not math.isfinite(speed):
        return MISSING_SPEED_COLOR
    s = min(max(speed / v_max, 0.0), 1.0)
    return (_round_half_away((1.0 - s) * 255), _round_half_away(s * 255), 0)


def line_pixels(c0, r0, c1, r1):
    """Integer midpoint line from (c0, r0) to (c1, r1), endpoints included.

    Steps one pixel along the major axis; the minor coordinate is rounded
    with ties going up. Returns (cols, rows) arrays.
    """
    dc = c1 - c0
    dr = r1 - r0
    n = max(abs(dc), abs(dr))
    if n == 0:
        return np.array([c0]), np.array([r0])
    t = np.arange(n + 1, dtype=np.int64)
    cols = c0 + (2 * t * dc + n) // (2 * n)
    rows = r0 + (2 * t * dr + n) // (2 * n)
    return cols, rows


def _brush_offsets(width):
    lo = -((width - 1) // 2)
    return np.arange(lo, lo + width)


def to_pixel(x, y, frame_w, frame_h, size):
    """Map frame meters to integer (col, row); row 0 is the northern edge."""
    col = np.floor(np.asarray(x) / frame_w * size).astype(np.int64)
    row = np.floor((frame_h - np.asarray(y)) / frame_h * size).astype(np.int64)
    return np.clip(col, 0, size - 1), np.clip(row, 0, size - 1)


def render_tile(clip, size=DEFAULT_SIZE, mode=GRAYSCALE, v_max=DEFAULT_V_MAX,
                line_width=DEFAULT_LINE_WIDTH):
    if size < 16:
        raise ConfigError(f"raster size must be >= 16, got {size}")
    if line_width < 1:
        raise ConfigError(f"line width must be >= 1, got {line_width}")
    if mode not in MODES:
        raise ConfigError(f"unknown raster mode {mode!r}")
    channels = 1 if mode == GRAYSCALE else 3
    img = np.full((size, size, channels), BACKGROUND, dtype=np.uint8)
    if clip.is_empty():
        return TileRaster(img, mode, empty=True)
    fw, fh = clip.frame_size
    offs = _brush_offsets(line_width)
    for chain in clip.segments:
        cols, rows = to_pixel(chain[:, 0], chain[:, 1], fw, fh, size)
        for k in range(len(chain) - 1):
            lc, lr = line_pixels(int(cols[k]), int(rows[k]), int(cols[k + 1]), int(rows[k + 1]))
            bc = np.clip((lc[:, None, None] + offs[None, None, :]).repeat(len(offs), 1), 0, size - 1)
            br = np.clip((lr[:, None, None] + offs[None, :, None]).repeat(len(offs), 2), 0, size - 1)
            if mode == GRAYSCALE:
                img[br.ravel(), bc.ravel(), 0] = INK
            else:
                img[br.ravel(), bc.ravel(), :] = speed_to_color(chain[k, 2], v_max)
    return TileRaster(img, mode)


def downscale(pixels, size):
    """Area-average resample of an (h, w, c) image to (size, size, c), float64."""
    h, w = pixels.shape[:2]
    img = pixels.astype(np.float64)
    if (h, w) == (size, size):
        return img
    a_r = _area_matrix(h, size)
    a_c = _area_matrix(w, size)
    rows = np.tensordot(a_r, img, axes=(1, 0))  # (size, w, c)
    return np.tensordot(rows, a_c, axes=(1, 1)).transpose(0, 2, 1)


def _area_matrix(n_in, n_out):
    """Row-stochastic (n_out, n_in) matrix of fractional pixel overlaps."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(math.floor(lo)), int(math.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            m[i, j] = min(hi, j + 1) - max(lo, j)
    return m / m.sum(axis=1, keepdims=True)


def save_png(raster, path):
    if raster.channels == 1:
        im = Image.fromarray(np.ascontiguousarray(raster.pixels[:, :, 0]))
    else:
        im = Image.fromarray(np.ascontiguousarray(raster.pixels))
    im.save(path, format="PNG", optimize=False)


def load_png(path, mode=None):
    try:
        im = Image.open(path)
        im.load()
    except OSError as exc:
        raise InputError(f"cannot read tile image {path}: {exc}") from exc
    if im.mode == "L":
        arr = np.asarray(im, dtype=np.uint8)[:, :, None]
        found = GRAYSCALE
    elif im.mode == "RGB":
        arr = np.asarray(im, dtype=np.uint8)
        found = SPEED
    else:
        raise FormatError(f"tile image {path} has unsupported mode {im.mode}")
    if mode is not None and mode != found:
        raise FormatError(f"tile image {path} is {found}, expected {mode}")
    arr = np.ascontiguousarray(arr)
    return TileRaster(arr, found, empty=bool((arr == BACKGROUND).all()))
