"""Synthetic road networks and GPS trajectories with known intersections."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GenerationError
from .geocell import EARTH_RADIUS_M
from .ingest import Journey, WayPoint
from .network import RoadNetwork

GRID = "grid"
PERTURBED_GRID = "perturbed-grid"

JITTER_FRACTION = 0.2
DELETE_PROBABILITY = 0.15
MIN_PATH_EDGES = 3
MAX_PATH_EDGES = 8
START_TIME_MS = 1_600_000_000_000

_K = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True)
class SimConfig:
    sample_interval_s: float = 1.0
    cruise_speed_mps: float = 15.0
    slow_factor: float = 0.3
    slow_radius_m: float = 40.0
    gps_noise_m: float = 2.0
    seed: int = 0


class LocalProjection:
    """Equirectangular meters about a fixed origin."""

    def __init__(self, lat0, lon0):
        self.lat0 = lat0
        self.lon0 = lon0
        self.kx = math.cos(math.radians(lat0)) * _K

    def to_xy(self, lat, lon):
        return (np.asarray(lon) - self.lon0) * self.kx, (np.asarray(lat) - self.lat0) * _K

    def to_latlon(self, x, y):
        return self.lat0 + np.asarray(y) / _K, self.lon0 + np.asarray(x) / self.kx


def _connected(n_nodes, edges):
    adj = [[] for _ in range(n_nodes)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n_nodes


def generate_network(kind=GRID, rows=5, cols=5, spacing=200.0, origin=(42.0, -93.6), seed=0):
    """Rectangular street grid with 4-neighbour edges, node ids ``r * cols + c``.

    ``perturbed-grid`` jitters every node by up to 0.2 * spacing and removes
    each edge with probability 0.15 unless that would disconnect the grid.
    """
    if rows < 2 or cols < 2:
        raise ConfigError("grid needs at least 2 rows and 2 columns")
    if not spacing > 0:
        raise ConfigError("spacing must be positive")
    if kind not in (GRID, PERTURBED_GRID):
        raise ConfigError(f"unknown network kind {kind!r}")
    rng = np.random.default_rng(seed)
    proj = LocalProjection(*origin)
    xy = {}
    for r in range(rows):
        for c in range(cols):
            x, y = c * spacing, r * spacing
            if kind == PERTURBED_GRID:
                ang = rng.uniform(0.0, 2.0 * math.pi)
                rad = rng.uniform(0.0, JITTER_FRACTION * spacing)
                x += rad * math.cos(ang)
                y += rad * math.sin(ang)
            xy[r * cols + c] = (x, y)
    edges = []
    for r in range(rows):
        for c in range(cols):
            n = r * cols + c
            if c + 1 < cols:
                edges.append((n, n + 1))
            if r + 1 < rows:
                edges.append((n, n + cols))
    if kind == PERTURBED_GRID:
        draws = rng.uniform(size=len(edges))
        kept = list(edges)
        for e, u in zip(edges, draws):
            if u < DELETE_PROBABILITY:
                trial = [f for f in kept if f != e]
                if _connected(rows * cols, trial):
                    kept = trial
        edges = kept
    nodes = {}
    for n, (x, y) in xy.items():
        lat, lon = proj.to_latlon(x, y)
        nodes[n] = (float(lat), float(lon))
    return RoadNetwork(nodes=nodes, edges=edges)


def _random_path(adj, rng, min_edges, max_edges, attempts=200):
    nodes = sorted(adj)
    target = int(rng.integers(min_edges, max_edges + 1))
    best = None
    for _ in range(attempts):
        path = [nodes[int(rng.integers(len(nodes)))]]
        visited = {path[0]}
        while len(path) - 1 < target:
            options = [w for w in adj[path[-1]] if w not in visited]
            if not options:
                break
            nxt = options[int(rng.integers(len(options)))]
            path.append(nxt)
            visited.add(nxt)
        if len(path) - 1 >= min_edges:
            return path
        if best is None or len(path) > len(best):
            best = path
    raise GenerationError(f"no simple path with {min_edges} edges found in {attempts} attempts")


def sample_path(xy_path, config, hubs_xy=(), rng=None):
    """Sample positions and speeds along a polyline in local meters.

    Returns (x, y, speed, t_seconds) arrays. Speed is the cruise speed, scaled
    by the slow factor within ``slow_radius_m`` of any hub; the vehicle moves
    ``speed * interval`` between samples. Noise is added after sampling.
    """
    pts = np.asarray(xy_path, dtype=float)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    hubs = np.asarray(hubs_xy, dtype=float).reshape(-1, 2)

    def position(s):
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        f = (s - cum[i]) / seg_len[i] if seg_len[i] > 0 else 0.0
        return pts[i] + f * seg[i]

    def speed_at(p):
        if len(hubs) and np.hypot(*(hubs - p).T).min() <= config.slow_radius_m:
            return config.cruise_speed_mps * config.slow_factor
        return config.cruise_speed_mps

    xs, ys, vs, ts = [], [], [], []
    s = 0.0
    t = 0.0
    while s < total:
        p = position(s)
        v = speed_at(p)
        xs.append(p[0])
        ys.append(p[1])
        vs.append(v)
        ts.append(t)
        s += v * config.sample_interval_s
        t += config.sample_interval_s
    x = np.array(xs)
    y = np.array(ys)
    if config.gps_noise_m > 0 and rng is not None:
        x = x + rng.normal(0.0, config.gps_noise_m, size=len(x))
        y = y + rng.normal(0.0, config.gps_noise_m, size=len(y))
    return x, y, np.array(vs), np.array(ts)


def simulate_trajectories(network, n_journeys, config=SimConfig()):
    """Random simple-path journeys over ``network``, sorted by journey id."""
    if n_journeys < 1:
        raise ConfigError("n_journeys must be >= 1")
    if not network.edges:
        raise GenerationError("network has no edges")
    lat0 = float(np.mean([p[0] for p in network.nodes.values()]))
    lon0 = float(np.mean([p[1] for p in network.nodes.values()]))
    proj = LocalProjection(lat0, lon0)
    node_xy = {n: tuple(float(v) for v in proj.to_xy(*network.nodes[n])) for n in network.nodes}
    hubs = [node_xy[n] for n in network.intersections()]
    adj = network.adjacency()
    width = max(5, len(str(n_journeys - 1)))
    journeys = []
    for idx, child in enumerate(np.random.SeedSequence(config.seed).spawn(n_journeys)):
        rng = np.random.default_rng(child)
        path = _random_path(adj, rng, MIN_PATH_EDGES, MAX_PATH_EDGES)
        x, y, v, t = sample_path([node_xy[n] for n in path], config, hubs, rng)
        lat, lon = proj.to_latlon(x, y)
        jid = f"j{idx:0{width}d}"
        t0 = START_TIME_MS + idx * 3_600_000
        pts = tuple(
            WayPoint(jid, float(t0 + round(ti * 1000.0)), float(la), float(lo), float(vi))
            for la, lo, vi, ti in zip(lat, lon, v, t)
        )
        if len(pts) < 2:
            raise GenerationError(f"journey {jid} produced fewer than 2 samples")
        journeys.append(Journey(jid, pts))
    return journeys
