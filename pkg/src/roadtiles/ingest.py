"""Waypoint CSV parsing, journey assembly and reference-network gating."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import groupby

import numpy as np

from .errors import ConfigError, FormatError, InputError
from .network import distance_to_edges, require_edges

REQUIRED_COLUMNS = ("journey_id", "timestamp_ms", "lat", "lon")
SPEED_COLUMN = "speed_mps"
CSV_HEADER = REQUIRED_COLUMNS + (SPEED_COLUMN,)

DEFAULT_MAX_OFFSET_M = 15.0


@dataclass(frozen=True)
class WayPoint:
    journey_id: str
    t: float
    lat: float
    lon: float
    speed: float | None = None

    def is_valid(self):
        if not (math.isfinite(self.t) and math.isfinite(self.lat) and math.isfinite(self.lon)):
            return False
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            return False
        if self.speed is not None and not (math.isfinite(self.speed) and self.speed >= 0):
            return False
        return True


@dataclass(frozen=True)
class Journey:
    id: str
    points: tuple

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError(f"journey {self.id!r} has fewer than 2 points")

    def __len__(self):
        return len(self.points)


def _parse_row(row):
    jid = (row.get("journey_id") or "").strip()
    if not jid:
        return None
    try:
        t = float(row["timestamp_ms"])
        lat = float(row["lat"])
        lon = float(row["lon"])
    except (TypeError, ValueError):
        return None
    raw_speed = (row.get(SPEED_COLUMN) or "").strip()
    speed = None
    if raw_speed:
        try:
            speed = float(raw_speed)
        except ValueError:
            return None
    wp = WayPoint(jid, t, lat, lon, speed)
    return wp if wp.is_valid() else None


def load_waypoints(source):
    """Parse a waypoint CSV stream.

    Returns ``(points, rejected)`` where ``rejected`` counts rows that were
    empty, unparseable or violated the waypoint invariants. Input order is
    kept.
    """
    try:
        text = source.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read waypoint stream: {exc}") from exc
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InputError(f"waypoint stream is not UTF-8: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames
    if not header:
        raise FormatError("waypoint stream has no header row")
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"waypoint header is missing columns: {', '.join(missing)}")
    points = []
    rejected = 0
    for row in reader:
        wp = _parse_row(row)
        if wp is None:
            rejected += 1
        else:
            points.append(wp)
    return points, rejected


def read_waypoints(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return load_waypoints(fh)
    except FileNotFoundError as exc:
        raise InputError(f"waypoint file not found: {path}") from exc


def write_waypoints(points, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in points:
        t = int(p.t) if float(p.t).is_integer() else repr(p.t)
        speed = "" if p.speed is None else repr(p.speed)
        w.writerow([p.journey_id, t, repr(p.lat), repr(p.lon), speed])


def build_journeys(points):
    """Group points by journey id into time-ordered journeys.

    Returns ``(journeys, dropped)``. Duplicate timestamps keep the first point
    after sorting by (t, lat, lon); groups left with fewer than two points are
    dropped and counted.
    """
    key = lambda p: (p.journey_id, p.t, p.lat, p.lon, -1.0 if p.speed is None else p.speed)
    ordered = sorted(points, key=key)
    journeys = []
    dropped = 0
    for jid, group in groupby(ordered, key=lambda p: p.journey_id):
        kept = []
        for p in group:
            if kept and kept[-1].t == p.t:
                continue
            kept.append(p)
        if len(kept) < 2:
            dropped += 1
        else:
            journeys.append(Journey(jid, tuple(kept)))
    return journeys, dropped


def filter_to_reference(journeys, network, max_offset=DEFAULT_MAX_OFFSET_M):
    """Drop waypoints farther than ``max_offset`` meters from every network edge.

    Returns ``(journeys, removed_points, dropped_journeys)``; journeys that
    fall below two points are dropped.
    """
    if not max_offset > 0:
        raise ConfigError("max_offset must be positive")
    require_edges(network)
    edges = network.edge_array()
    out = []
    removed = 0
    dropped = 0
    for j in journeys:
        lat = np.array([p.lat for p in j.points])
        lon = np.array([p.lon for p in j.points])
        keep = distance_to_edges(lat, lon, edges) <= max_offset
        removed += int((~keep).sum())
        pts = tuple(p for p, k in zip(j.points, keep) if k)
        if len(pts) < 2:
            dropped += 1
        else:
            out.append(Journey(j.id, pts))
    return out, removed, dropped
