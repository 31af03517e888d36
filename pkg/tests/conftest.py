import sys

import numpy as np
import pytest

from roadtiles.geocell import cell_bounds, encode
from roadtiles.tiler import TileClip


def make_clip(code, chains, point_count=10):
    """TileClip from chains given in frame meters as (x, y[, speed]) rows."""
    segs = []
    for ch in chains:
        a = np.asarray(ch, dtype=float)
        if a.shape[1] == 2:
            a = np.column_stack([a, np.full(len(a), np.nan)])
        segs.append(a)
    return TileClip(cell_bounds(code), segs, point_count)


@pytest.fixture
def cell8():
    return encode(42.0, -93.6, 8)


@pytest.fixture
def clip_factory():
    return make_clip


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
