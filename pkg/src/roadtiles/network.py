"""Road network graph, its GeoJSON form, and point-to-edge distances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, InputError
from .geocell import EARTH_RADIUS_M

DEG = math.pi / 180.0


@dataclass
class RoadNetwork:
    nodes: dict = field(default_factory=dict)  # id -> (lat, lon)
    edges: list = field(default_factory=list)  # (u, v) with u != v
    extra_intersections: list = field(default_factory=list)  # (lat, lon) tagged points

    def __post_init__(self):
        for u, v in self.edges:
            if u == v:
                raise FormatError(f"self-loop edge at node {u!r}")
            if u not in self.nodes or v not in self.nodes:
                raise FormatError(f"edge ({u!r}, {v!r}) references a missing node")
        for lat, lon in self.nodes.values():
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise FormatError(f"node coordinate out of range ({lat}, {lon})")

    def degree(self):
        deg = {n: 0 for n in self.nodes}
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def intersections(self):
        """Node ids of degree >= 3, sorted."""
        return sorted(n for n, d in self.degree().items() if d >= 3)

    def intersection_points(self):
        pts = [self.nodes[n] for n in self.intersections()]
        pts.extend(self.extra_intersections)
        return sorted(set(pts))

    def adjacency(self):
        adj = {n: [] for n in self.nodes}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for n in adj:
            adj[n].sort()
        return adj

    def edge_array(self):
        """Edges as an (m, 4) array of lat0, lon0, lat1, lon1."""
        if not self.edges:
            return np.empty((0, 4))
        return np.array([self.nodes[u] + self.nodes[v] for u, v in self.edges], dtype=float)


def distance_to_edges(lat, lon, edges):
    """Distance in meters from each point to the nearest edge.

    Uses an equirectangular projection centred on each query point, which is
    accurate at the sub-kilometre offsets the reference filter cares about.
    ``lat``/``lon`` are 1-d arrays; ``edges`` is the output of ``edge_array``.
    """
    lat = np.asarray(lat, dtype=float)[:, None]
    lon = np.asarray(lon, dtype=float)[:, None]
    kx = np.cos(lat * DEG) * EARTH_RADIUS_M * DEG
    ky = EARTH_RADIUS_M * DEG
    ax = (edges[None, :, 1] - lon) * kx
    ay = (edges[None, :, 0] - lat) * ky
    bx = (edges[None, :, 3] - lon) * kx
    by = (edges[None, :, 2] - lat) * ky
    dx = bx - ax
    dy = by - ay
    len2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(len2 > 0, -(ax * dx + ay * dy) / len2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    px = ax + t * dx
    py = ay + t * dy
    return np.sqrt(px * px + py * py).min(axis=1)


def to_geojson(network):
    """FeatureCollection of LineString edges plus intersection Points."""
    features = []
    for u, v in network.edges:
        (la0, lo0), (la1, lo1) = network.nodes[u], network.nodes[v]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[lo0, la0], [lo1, la1]]},
            "properties": {"u": u, "v": v},
        })
    for n in network.intersections():
        lat, lon = network.nodes[n]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "properties": {"role": "intersection", "node": n},
        })
    for lat, lon in network.extra_intersections:
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "properties": {"role": "intersection"},
        })
    return {"type": "FeatureCollection", "features": features}


def from_geojson(doc):
    """Build a network from a FeatureCollection.

    LineString vertices become nodes keyed by exact coordinate, so edges that
    share an endpoint connect. Point features tagged ``role: intersection``
    are kept as labelled intersection locations.
    """
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise FormatError("expected a GeoJSON FeatureCollection")
    ids = {}
    nodes = {}
    edges = []
    points = []

    def node(coord):
        lon, lat = float(coord[0]), float(coord[1])
        key = (lat, lon)
        if key not in ids:
            ids[key] = len(ids)
            nodes[ids[key]] = key
        return ids[key]

    for feat in doc.get("features", []):
        geom = feat.get("geometry") or {}
        kind = geom.get("type")
        coords = geom.get("coordinates")
        if kind == "LineString":
            lines = [coords]
        elif kind == "MultiLineString":
            lines = coords
        elif kind == "Point":
            if (feat.get("properties") or {}).get("role") == "intersection":
                points.append((float(coords[1]), float(coords[0])))
            continue
        else:
            continue
        for line in lines:
            prev = None
            for c in line:
                cur = node(c)
                if prev is not None and prev != cur:
                    edges.append((prev, cur))
                prev = cur
    net = RoadNetwork(nodes=nodes, edges=edges)
    # tagged points that coincide with a derived intersection are not duplicated
    derived = set(net.intersection_points())
    net.extra_intersections = sorted(set(p for p in points if p not in derived))
    return net


def load_network(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read network file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"network file {path} is not valid JSON: {exc}") from exc
    return from_geojson(doc)


def save_network(network, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_geojson(network), fh, indent=1, sort_keys=True)
        fh.write("\n")


def require_edges(network):
    if network is None or not network.edges:
        raise ConfigError("reference network has no edges")
