"""Cut journey polylines into per-geohash-cell chains.

Clipping runs in degree space against the exact (dyadic) cell bounds, then
each piece is projected into the cell's local metric frame. A segment is
handed to every cell it geometrically crosses, not only cells holding one of
its endpoints.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import geocell
from .geocell import EARTH_RADIUS_M, GeoCell

_K = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True)
class CellFrame:
    """Equirectangular frame anchored at a cell's south-west corner."""

    lat_min: float
    lon_min: float
    kx: float
    ky: float

    @classmethod
    def of(cls, cell):
        lat_c = 0.5 * (cell.lat_min + cell.lat_max)
        return cls(cell.lat_min, cell.lon_min, math.cos(math.radians(lat_c)) * _K, _K)

    def forward(self, lat, lon):
        return (np.asarray(lon) - self.lon_min) * self.kx, (np.asarray(lat) - self.lat_min) * self.ky

    def inverse(self, x, y):
        return self.lat_min + np.asarray(y) / self.ky, self.lon_min + np.asarray(x) / self.kx


@dataclass
class TileClip:
    """Chains of one cell. Each chain is an (n, 3) array of x, y, speed (NaN when unknown)."""

    cell: GeoCell
    segments: list = field(default_factory=list)
    point_count: int = 0
    journey_ids: list = field(default_factory=list)

    @property
    def code(self):
        return self.cell.code

    @property
    def frame_size(self):
        return self.cell.frame_size()

    def is_empty(self):
        return not self.segments

    def total_length(self):
        return sum(chain_length(c) for c in self.segments)


def chain_length(chain):
    d = np.diff(np.asarray(chain)[:, :2], axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _liang_barsky(x0, y0, x1, y1, xmin, xmax, ymin, ymax):
    t0, t1 = 0.0, 1.0
    dx = x1 - x0
    dy = y1 - y0
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0:
            if q < 0:
                return None
        else:
            r = q / p
            if p < 0:
                if r > t1:
                    return None
                if r > t0:
                    t0 = r
            else:
                if r < t0:
                    return None
                if r < t1:
                    t1 = r
    return t0, t1


def _clip_piece(a, b, bbox):
    """Parameter interval of segment a->b inside bbox, or None.

    ``a`` and ``b`` are (lat, lon, speed). Point contacts are dropped, and so
    are pieces running along the north or east edge: those belong to the
    neighbouring cell under the upper-half boundary convention.
    """
    lat_min, lat_max, lon_min, lon_max = bbox
    res = _liang_barsky(a[1], a[0], b[1], b[0], lon_min, lon_max, lat_min, lat_max)
    if res is None:
        return None
    t0, t1 = res
    degenerate = a[0] == b[0] and a[1] == b[1]
    if t1 <= t0 and not degenerate:
        return None
    if a[0] == b[0] and a[0] == lat_max and lat_max < 90.0:
        return None
    if a[1] == b[1] and a[1] == lon_max and lon_max < 180.0:
        return None
    return t0, t1


def _lerp(a, b, t):
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    return (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2]))


def _to_frame(vertices, cell):
    """Project (lat, lon, speed) vertices into the cell frame, clamped to the cell."""
    arr = np.asarray(vertices, dtype=float)
    lat = np.clip(arr[:, 0], cell.lat_min, cell.lat_max)
    lon = np.clip(arr[:, 1], cell.lon_min, cell.lon_max)
    x, y = CellFrame.of(cell).forward(lat, lon)
    out = np.column_stack([x, y, arr[:, 2]])
    # drop repeated vertices (stationary vehicle)
    keep = np.ones(len(out), dtype=bool)
    keep[1:] = np.any(out[1:, :2] != out[:-1, :2], axis=1)
    return out[keep]


def _assemble(chain, pieces, cell):
    """Join (segment index, t0, t1) pieces into maximal chains in the cell frame."""
    chains = []
    current = None
    last = None
    for i, t0, t1 in pieces:
        a, b = chain[i], chain[i + 1]
        start = _lerp(a, b, t0)
        end = _lerp(a, b, t1)
        if current is not None and last == (i - 1, 1.0) and t0 == 0.0:
            current[1].append(end)
        else:
            if current is not None:
                chains.append(current)
            current = (i + t0, [start, end])
        last = (i, t1)
    if current is not None:
        chains.append(current)
    out = []
    for start_param, verts in chains:
        arr = _to_frame(verts, cell)
        if len(arr) >= 2:
            out.append((start_param, arr))
    return out


def _normalize(chain):
    return [(float(p[0]), float(p[1]), float("nan") if len(p) < 3 or p[2] is None else float(p[2]))
            for p in chain]


def clip_polyline(chain, cell):
    """Clip a (lat, lon, speed) polyline to a cell; returns chains in the cell frame."""
    chain = _normalize(chain)
    pieces = []
    for i in range(len(chain) - 1):
        res = _clip_piece(chain[i], chain[i + 1], cell.bbox)
        if res is not None:
            pieces.append((i, res[0], res[1]))
    return [arr for _, arr in _assemble(chain, pieces, cell)]


def _vertex_indices(chain, precision):
    lon_bits, lat_bits = geocell.bit_split(precision)
    idx = []
    for lat, lon, _ in chain:
        ix = min(geocell._bisect(lon, -180.0, 180.0, lon_bits), (1 << lon_bits) - 1)
        iy = min(geocell._bisect(lat, -90.0, 90.0, lat_bits), (1 << lat_bits) - 1)
        idx.append((ix, iy))
    return idx


def _journey_pieces(chain, precision):
    """Map (ix, iy) -> list of (segment index, t0, t1) for one polyline."""
    idx = _vertex_indices(chain, precision)
    pieces = defaultdict(list)
    bounds = {}
    for i in range(len(chain) - 1):
        (ax, ay), (bx, by) = idx[i], idx[i + 1]
        for ix in range(min(ax, bx), max(ax, bx) + 1):
            for iy in range(min(ay, by), max(ay, by) + 1):
                key = (ix, iy)
                if key not in bounds:
                    bounds[key] = geocell.index_bounds(ix, iy, precision)
                res = _clip_piece(chain[i], chain[i + 1], bounds[key])
                if res is not None:
                    pieces[key].append((i, res[0], res[1]))
    return pieces, idx


def assign_tiles(journeys, precision=8):
    """Clip every journey against every cell it touches.

    Returns a dict of geohash code -> TileClip with keys in lexicographic
    order. Within a cell, chains are ordered by (journey id, start parameter).
    """
    geocell._check_precision(precision)
    found = defaultdict(list)  # code -> [(journey id, start param, chain)]
    counts = defaultdict(int)
    cells = {}
    for j in journeys:
        chain = _normalize([(p.lat, p.lon, p.speed) for p in j.points])
        pieces, idx = _journey_pieces(chain, precision)
        for key, plist in pieces.items():
            cell = cells.get(key)
            if cell is None:
                cell = cells[key] = geocell.cell_at(key[0], key[1], precision)
            for start, arr in _assemble(chain, plist, cell):
                found[cell.code].append((j.id, start, arr))
        for key in idx:
            counts[key] += 1
    by_code = {c.code: c for c in cells.values()}
    counts = {cells[k].code: n for k, n in counts.items() if k in cells}
    tiles = {}
    for code in sorted(found):
        items = sorted(found[code], key=lambda r: (r[0], r[1]))
        tiles[code] = TileClip(
            cell=by_code[code],
            segments=[r[2] for r in items],
            point_count=counts.get(code, 0),
            journey_ids=[r[0] for r in items],
        )
    return tiles


def tile_index_record(clip):
    lat_min, lat_max, lon_min, lon_max = clip.cell.bbox
    return {
        "code": clip.code,
        "point_count": clip.point_count,
        "chain_count": len(clip.segments),
        "bbox": [lat_min, lat_max, lon_min, lon_max],
    }


def write_tile_index(tiles, fh):
    for code in sorted(tiles):
        fh.write(json.dumps(tile_index_record(tiles[code]), sort_keys=True) + "\n")
