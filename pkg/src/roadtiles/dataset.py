"""Tile labelling, stratified train/test split and training-image augmentation."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import CLASSES, INTERSECTION, STRAIGHT
from .errors import ConfigError, FormatError
from .geocell import encode
from .raster import BACKGROUND, TileRaster

ORIGINAL = "original"
AUGMENTED = "augmented"

DEFAULT_TEST_FRACTION = 0.10
DEFAULT_AUGMENT_K = 2
DEFAULT_MIN_POINTS = 5

SMALL_ROTATION_DEG = 15.0
SHEAR_DEG = 10.0
BLUR_RADII = (0, 1, 2)
NOISE_AMPLITUDE = 10


@dataclass
class TileSample:
    code: str
    raster: TileRaster
    label: str
    provenance: str = ORIGINAL
    variant: int = -1  # augmentation index, -1 for originals

    def __post_init__(self):
        if self.label not in CLASSES:
            raise ValueError(f"unknown label {self.label!r}")


def label_cells(tiles, intersections, min_points=DEFAULT_MIN_POINTS):
    """Label each tile from known intersection locations.

    Returns ``(labels, excluded)``: ``labels`` is a code-sorted list of
    (code, label); tiles with fewer than ``min_points`` waypoints are left out
    and counted in ``excluded``.
    """
    if min_points < 1:
        raise ConfigError("min_points must be >= 1")
    by_precision = {}
    for lat, lon in intersections:
        for p in {len(c) for c in tiles}:
            by_precision.setdefault(p, set()).add(encode(lat, lon, p).code)
    labels = []
    excluded = 0
    for code in sorted(tiles):
        if tiles[code].point_count < min_points:
            excluded += 1
            continue
        hit = code in by_precision.get(len(code), ())
        labels.append((code, INTERSECTION if hit else STRAIGHT))
    return labels, excluded


def _quotas(counts, n_test):
    """Largest-remainder allocation of n_test across strata."""
    n = sum(counts)
    exact = [n_test * c / n for c in counts]
    base = [math.floor(e) for e in exact]
    left = n_test - sum(base)
    order = sorted(range(len(counts)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def split_dataset(samples, test_fraction=DEFAULT_TEST_FRACTION, seed=0):
    """Stratified split; returns (train, test) preserving input order."""
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must lie strictly between 0 and 1")
    samples = list(samples)
    strata = {c: [i for i, s in enumerate(samples) if s.label == c] for c in CLASSES}
    empty = [c for c, idx in strata.items() if not idx]
    if empty:
        raise ConfigError(f"no samples of class {', '.join(empty)}")
    n_test = math.floor(len(samples) * test_fraction)
    quotas = _quotas([len(strata[c]) for c in CLASSES], n_test)
    rng = np.random.default_rng(seed)
    test_idx = set()
    for c, q in zip(CLASSES, quotas):
        idx = sorted(strata[c], key=lambda i: (samples[i].code, i))
        pick = rng.permutation(len(idx))[:q]
        test_idx.update(idx[k] for k in pick)
    train = [s for i, s in enumerate(samples) if i not in test_idx]
    test = [s for i, s in enumerate(samples) if i in test_idx]
    return train, test


# ---------------------------------------------------------------- augmentation

def variant_rng(seed, code, index):
    return np.random.default_rng([seed, zlib.crc32(code.encode("utf-8")), index])


def flip(pixels, axis):
    """axis 1 mirrors left-right, axis 0 top-bottom."""
    return np.ascontiguousarray(np.flip(pixels, axis=axis))


def _affine(pixels, matrix):
    """Apply a 2x2 linear map about the image centre, nearest-neighbour, white fill."""
    h, w = pixels.shape[:2]
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    inv = np.linalg.inv(matrix)
    offset = centre - inv @ centre
    out = np.empty_like(pixels)
    for c in range(pixels.shape[2]):
        out[:, :, c] = ndimage.affine_transform(
            pixels[:, :, c], inv, offset=offset, order=0, mode="constant", cval=BACKGROUND)
    return out


def rotate(pixels, degrees):
    a = math.radians(degrees)
    return _affine(pixels, np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]))


def shear(pixels, degrees):
    return _affine(pixels, np.array([[1.0, 0.0], [math.tan(math.radians(degrees)), 1.0]]))


def box_blur(pixels, radius):
    if radius == 0:
        return pixels
    out = ndimage.uniform_filter(pixels.astype(np.float64), size=(2 * radius + 1, 2 * radius + 1, 1),
                                 mode="nearest")
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def add_noise(pixels, rng, amplitude=NOISE_AMPLITUDE):
    noise = rng.integers(-amplitude, amplitude + 1, size=pixels.shape)
    return np.clip(pixels.astype(np.int64) + noise, 0, 255).astype(np.uint8)


def random_variant(pixels, rng):
    """One random composition of flips, rotations, shear, blur and noise."""
    img = pixels
    if rng.random() < 0.5:
        img = flip(img, 1)
    if rng.random() < 0.5:
        img = flip(img, 0)
    if rng.random() < 0.5:
        img = np.ascontiguousarray(np.rot90(img, k=int(rng.integers(1, 4)), axes=(0, 1)))
    if rng.random() < 0.5:
        img = rotate(img, rng.uniform(-SMALL_ROTATION_DEG, SMALL_ROTATION_DEG))
    if rng.random() < 0.5:
        img = shear(img, rng.uniform(-SHEAR_DEG, SHEAR_DEG))
    img = box_blur(img, int(rng.choice(BLUR_RADII)))
    if rng.random() < 0.5:
        img = add_noise(img, rng)
    return img


def augment(sample, k=DEFAULT_AUGMENT_K, seed=0):
    """``k`` augmented copies of an original sample."""
    if k < 0:
        raise ConfigError("k must be >= 0")
    if sample.provenance != ORIGINAL:
        raise ConfigError("only original samples can be augmented")
    out = []
    for i in range(k):
        img = random_variant(sample.raster.pixels, variant_rng(seed, sample.code, i))
        out.append(TileSample(sample.code, sample.raster.replace(img), sample.label, AUGMENTED, i))
    return out


def augment_all(samples, k=DEFAULT_AUGMENT_K, seed=0):
    out = []
    for s in samples:
        out.extend(augment(s, k, seed))
    return out


# ---------------------------------------------------------------- files

def write_labels(labels, fh):
    for code, label in labels:
        fh.write(json.dumps({"code": code, "label": label}, sort_keys=True) + "\n")


def read_labels(fh):
    labels = []
    for n, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            code, label = rec["code"], rec["label"]
        except (ValueError, KeyError) as exc:
            raise FormatError(f"labels line {n}: {exc}") from exc
        if label not in CLASSES:
            raise FormatError(f"labels line {n}: unknown label {label!r}")
        labels.append((code, label))
    return labels


def manifest(train, test, test_fraction, k, seed):
    return {
        "test_fraction": test_fraction,
        "split_seed": seed,
        "augment_k": k,
        "augment_seed": seed,
        "train": sorted(s.code for s in train if s.provenance == ORIGINAL),
        "test": sorted(s.code for s in test),
    }
