import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_clip
from roadtiles.dataset import (AUGMENTED, TileSample, augment, augment_all, box_blur, flip, label_cells,
                               manifest, read_labels, rotate, shear, split_dataset, write_labels)
from roadtiles.errors import ConfigError, FormatError
from roadtiles.geocell import encode
from roadtiles.raster import SPEED, TileRaster, render_tile

A = encode(42.0, -93.6, 8)
B = encode(42.001, -93.6, 8)


def test_label_cells():
    tiles = {A.code: make_clip(A.code, [], 10), B.code: make_clip(B.code, [], 10)}
    labels, excluded = label_cells(tiles, [A.center], 5)
    assert labels == sorted([(A.code, "intersection"), (B.code, "straight")])
    assert excluded == 0


def test_sparse_cell_excluded():
    tiles = {A.code: make_clip(A.code, [], 3)}
    assert label_cells(tiles, [A.center], 5) == ([], 1)
    with pytest.raises(ConfigError):
        label_cells(tiles, [], 0)


def placeholder(n_int, n_str):
    return ([TileSample(f"i{k:05d}", None, "intersection") for k in range(n_int)]
            + [TileSample(f"s{k:05d}", None, "straight") for k in range(n_str)])


def test_split_2217():
    data = placeholder(553, 1664)
    train, test = split_dataset(data, 0.10, seed=0)
    assert len(test) == 221 and len(train) == 1996


def test_split_stratified_small():
    train, test = split_dataset(placeholder(5, 5), 0.2, seed=1)
    assert sorted(s.label for s in test) == ["intersection", "straight"]


def test_split_deterministic_and_seed_sensitive():
    data = placeholder(30, 70)
    a = split_dataset(data, 0.1, 4)
    b = split_dataset(data, 0.1, 4)
    c = split_dataset(data, 0.1, 5)
    codes = lambda part: [s.code for s in part]
    assert codes(a[1]) == codes(b[1])
    assert codes(a[1]) != codes(c[1])


def test_split_errors():
    with pytest.raises(ConfigError):
        split_dataset(placeholder(0, 5), 0.2)
    with pytest.raises(ConfigError):
        split_dataset(placeholder(5, 5), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.floats(0.01, 0.99), st.integers(0, 10))
def test_split_is_partition(n_int, n_str, frac, seed):
    data = placeholder(n_int, n_str)
    train, test = split_dataset(data, frac, seed)
    ids = sorted(id(s) for s in train + test)
    assert ids == sorted(id(s) for s in data)
    assert len(test) == int(np.floor(len(data) * frac))


def one_row_raster():
    w, h = A.frame_size()
    return render_tile(make_clip(A.code, [[(0.0, h / 2), (w, h / 2)]]), 64, line_width=1)


def test_flip_symmetric_row():
    r = one_row_raster()
    assert flip(r.pixels, 1).tobytes() == r.pixels.tobytes()


def test_augment_k0_and_counts():
    s = TileSample(A.code, one_row_raster(), "straight")
    assert augment(s, 0) == []
    originals = [TileSample(f"c{k}", one_row_raster(), "straight") for k in range(5)]
    assert len(augment_all(originals, 2)) == 10
    assert 1996 * (1 + 2) == 5988


def test_augment_properties():
    w, h = A.frame_size()
    r = render_tile(make_clip(A.code, [[(0, 0, 3.0), (w, h, 30.0)]]), 64, SPEED)
    s = TileSample(A.code, r, "intersection")
    out = augment(s, 6, seed=3)
    assert len(out) == 6
    for k, v in enumerate(out):
        assert v.label == "intersection" and v.provenance == AUGMENTED and v.code == A.code and v.variant == k
        assert v.raster.pixels.shape == r.pixels.shape and v.raster.pixels.dtype == np.uint8
    again = augment(s, 6, seed=3)
    assert all(x.raster.tobytes() == y.raster.tobytes() for x, y in zip(out, again))
    with pytest.raises(ConfigError):
        augment(out[0], 1)


def test_rotation_fills_white():
    img = np.zeros((32, 32, 1), np.uint8)
    out = rotate(img, 15.0)
    assert out[0, 0, 0] == 255 and out[16, 16, 0] == 0
    assert shear(img, 10.0)[16, 16, 0] == 0


def test_box_blur_radius_zero_identity():
    img = np.arange(48, dtype=np.uint8).reshape(4, 4, 3)
    assert box_blur(img, 0) is img
    assert box_blur(np.full((5, 5, 1), 9, np.uint8), 2).max() == 9


def test_labels_roundtrip_and_errors():
    buf = io.StringIO()
    write_labels([("abc", "straight"), ("abd", "intersection")], buf)
    assert read_labels(io.StringIO(buf.getvalue())) == [("abc", "straight"), ("abd", "intersection")]
    with pytest.raises(FormatError):
        read_labels(io.StringIO('{"code": "a", "label": "ramp"}\n'))
    with pytest.raises(FormatError):
        read_labels(io.StringIO("not json\n"))


def test_manifest():
    train, test = split_dataset(placeholder(5, 5), 0.2, 1)
    doc = manifest(train, test, 0.2, 2, 1)
    assert len(doc["train"]) == 8 and len(doc["test"]) == 2 and doc["augment_k"] == 2
