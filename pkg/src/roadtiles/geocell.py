"""Geohash encoding, decoding and cell geometry.

Bits alternate longitude/latitude starting with longitude, five bits per
base-32 character. A coordinate lying exactly on a split goes to the upper
(north/east) half, which makes ``encode`` total over the closed ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, FormatError

ALPHABET = "0123456789bcdefghjkmnpqrstuvwxyz"
_DECODE = {c: i for i, c in enumerate(ALPHABET)}

EARTH_RADIUS_M = 6_371_008.8
MAX_PRECISION = 12


@dataclass(frozen=True, order=True)
class GeoCell:
    code: str
    precision: int
    bbox: tuple[float, float, float, float]  # lat_min, lat_max, lon_min, lon_max

    @property
    def lat_min(self):
        return self.bbox[0]

    @property
    def lat_max(self):
        return self.bbox[1]

    @property
    def lon_min(self):
        return self.bbox[2]

    @property
    def lon_max(self):
        return self.bbox[3]

    @property
    def center(self):
        return (0.5 * (self.bbox[0] + self.bbox[1]), 0.5 * (self.bbox[2] + self.bbox[3]))

    def contains(self, lat, lon):
        lat_min, lat_max, lon_min, lon_max = self.bbox
        return lat_min <= lat <= lat_max and lon_min <= lon <= lon_max

    def frame_size(self):
        """Width and height (meters) of the cell in its local equirectangular frame."""
        lat_c = math.radians(self.center[0])
        k = EARTH_RADIUS_M * math.pi / 180.0
        return ((self.lon_max - self.lon_min) * math.cos(lat_c) * k,
                (self.lat_max - self.lat_min) * k)


def bit_split(precision):
    """Return (longitude bits, latitude bits) for a code of this length."""
    n = 5 * precision
    return (n + 1) // 2, n // 2


def _check_precision(precision):
    if not isinstance(precision, int) or not 1 <= precision <= MAX_PRECISION:
        raise DomainError(f"precision must be an integer in 1..{MAX_PRECISION}, got {precision!r}")


def _bisect(value, lo, hi, nbits):
    """Index of the dyadic interval holding ``value``, ties to the upper half.

    Equivalent to ``nbits`` rounds of bisection. The float estimate is
    corrected against the exact interval edges (dyadic, so representable).
    """
    n = 1 << nbits
    span = (hi - lo) / n
    idx = min(max(int((value - lo) / span), 0), n - 1)
    while idx > 0 and value < lo + idx * span:
        idx -= 1
    while idx < n - 1 and value >= lo + (idx + 1) * span:
        idx += 1
    return idx


def encode(lat, lon, precision=8):
    _check_precision(precision)
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise DomainError(f"non-finite coordinate ({lat}, {lon})")
    if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
        raise DomainError(f"coordinate out of range ({lat}, {lon})")
    lon_bits, lat_bits = bit_split(precision)
    ix = _bisect(lon, -180.0, 180.0, lon_bits)
    iy = _bisect(lat, -90.0, 90.0, lat_bits)
    return cell_at(ix, iy, precision)


def index_bounds(ix, iy, precision):
    lon_bits, lat_bits = bit_split(precision)
    lon_span = 360.0 / (1 << lon_bits)
    lat_span = 180.0 / (1 << lat_bits)
    lon_min = -180.0 + ix * lon_span
    lat_min = -90.0 + iy * lat_span
    return (lat_min, lat_min + lat_span, lon_min, lon_min + lon_span)


# _SPREAD[b] places the 8 bits of b on the even bit positions of a 16-bit word
_SPREAD = [sum(((b >> i) & 1) << (2 * i) for i in range(8)) for b in range(256)]


def _spread(v):
    return (_SPREAD[v & 255] | _SPREAD[(v >> 8) & 255] << 16
            | _SPREAD[(v >> 16) & 255] << 32 | _SPREAD[(v >> 24) & 255] << 48)


def cell_at(ix, iy, precision):
    """Cell for integer column ``ix`` (longitude) and row ``iy`` (latitude)."""
    lon_bits, lat_bits = bit_split(precision)
    if not (0 <= ix < (1 << lon_bits) and 0 <= iy < (1 << lat_bits)):
        raise DomainError(f"cell index ({ix}, {iy}) outside precision {precision}")
    if (5 * precision) % 2:
        bits = _spread(ix) | (_spread(iy) << 1)  # odd bit count ends on a longitude bit
    else:
        bits = (_spread(ix) << 1) | _spread(iy)
    code = "".join(ALPHABET[(bits >> (5 * k)) & 31] for k in range(precision - 1, -1, -1))
    return GeoCell(code, precision, index_bounds(ix, iy, precision))


def cell_index(code):
    """Inverse of :func:`cell_at`: (ix, iy, precision) for a code."""
    if not code:
        raise FormatError("empty geohash")
    ix = iy = 0
    k = 0
    for ch in code:
        try:
            v = _DECODE[ch]
        except KeyError:
            raise FormatError(f"invalid geohash character {ch!r} in {code!r}") from None
        for shift in range(4, -1, -1):
            b = (v >> shift) & 1
            if k % 2 == 0:
                ix = (ix << 1) | b
            else:
                iy = (iy << 1) | b
            k += 1
    return ix, iy, len(code)


def cell_bounds(code):
    if len(code) > MAX_PRECISION:
        raise FormatError(f"geohash longer than {MAX_PRECISION} characters: {code!r}")
    ix, iy, precision = cell_index(code)
    return GeoCell(code, precision, index_bounds(ix, iy, precision))


def haversine_m(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def cell_dimensions(precision, lat=0.0):
    """(width, height) in meters of a cell in the latitude band containing ``lat``.

    Width is measured along the cell's southern edge, height along a meridian.
    """
    _check_precision(precision)
    lon_bits, lat_bits = bit_split(precision)
    lon_span = 360.0 / (1 << lon_bits)
    lat_span = 180.0 / (1 << lat_bits)
    iy = min(_bisect(lat, -90.0, 90.0, lat_bits), (1 << lat_bits) - 1)
    south = -90.0 + iy * lat_span
    width = haversine_m(south, 0.0, south, lon_span)
    height = EARTH_RADIUS_M * math.radians(lat_span)
    return width, height
