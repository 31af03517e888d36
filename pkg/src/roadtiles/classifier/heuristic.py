"""Geometric intersection detector working directly on clipped chains.

Chains are first simplified (Douglas-Peucker) so that GPS jitter along a road
does not read as branching, and stubs shorter than ``min_chain`` are dropped.
The simplification tolerance follows the jitter measured in the tile itself,
capped at ``simplify_tol``, so clean traces keep their corners.
Interior vertices and chain-chain crossings become nodes on a snap grid. At
each node the heading of every passing chain is taken ``reach`` meters either
way; headings closer than ``min_branch`` degrees merge into one branch, and a
branch needs ``min_support`` distinct chains behind it. A node with three or
more branches marks the tile as an intersection.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .. import INTERSECTION, STRAIGHT
from .base import Prediction

DEFAULT_SNAP_M = 2.0
DEFAULT_MIN_BRANCH_DEG = 30.0
DEFAULT_SIMPLIFY_M = 8.0
DEFAULT_REACH_M = 6.0
DEFAULT_MIN_SUPPORT = 2
DEFAULT_MIN_CHAIN_M = 6.0
MIN_SIMPLIFY_M = 0.5
JITTER_SCALE = 8.0


class UnclassifiableError(ValueError):
    """Raised for a tile with no chains."""


def simplify(points, tol):
    """Douglas-Peucker on an (n, 2) array; endpoints always kept."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n <= 2 or tol <= 0:
        return pts
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = pts[i], pts[j]
        d = b - a
        seg = pts[i + 1:j] - a
        norm = math.hypot(d[0], d[1])
        if norm == 0.0:
            dist = np.hypot(seg[:, 0], seg[:, 1])
        else:
            dist = np.abs(seg[:, 0] * d[1] - seg[:, 1] * d[0]) / norm
        k = int(np.argmax(dist))
        if dist[k] > tol:
            m = i + 1 + k
            keep[m] = True
            stack.append((i, m))
            stack.append((m, j))
    return pts[keep]


def jitter(chains):
    """Median offset of interior vertices from the chord of their neighbours."""
    heights = []
    for c in chains:
        if len(c) < 3:
            continue
        a, m, b = c[:-2], c[1:-1], c[2:]
        d = b - a
        norm = np.hypot(d[:, 0], d[:, 1])
        cross = np.abs((m[:, 0] - a[:, 0]) * d[:, 1] - (m[:, 1] - a[:, 1]) * d[:, 0])
        ok = norm > 0
        heights.append(cross[ok] / norm[ok])
    if not heights:
        return 0.0
    return float(np.median(np.concatenate(heights)))


def _crossings(chains):
    """Proper crossings between segments of different chains (or non-adjacent
    segments of one chain). Returns a list of (chain, arc-length position, point)."""
    segs = []
    for ci, c in enumerate(chains):
        d = np.diff(c, axis=0)
        lens = np.hypot(d[:, 0], d[:, 1])
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        for k in range(len(c) - 1):
            segs.append((ci, k, c[k], c[k + 1], cum[k], lens[k]))
    if len(segs) < 2:
        return []
    a = np.array([s[2] for s in segs])
    b = np.array([s[3] for s in segs])
    ci = np.array([s[0] for s in segs])
    ki = np.array([s[1] for s in segs])
    r = b - a
    # pairwise parametric intersection a_i + t r_i = a_j + u r_j
    den = r[:, None, 0] * r[None, :, 1] - r[:, None, 1] * r[None, :, 0]
    qp = a[None, :, :] - a[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[..., 0] * r[None, :, 1] - qp[..., 1] * r[None, :, 0]) / den
        u = (qp[..., 0] * r[:, None, 1] - qp[..., 1] * r[:, None, 0]) / den
    ok = (den != 0) & (t > 0) & (t < 1) & (u > 0) & (u < 1)
    same = ci[:, None] == ci[None, :]
    adjacent = same & (np.abs(ki[:, None] - ki[None, :]) <= 1)
    ok &= ~adjacent
    ok &= np.triu(np.ones_like(ok), 1).astype(bool)
    out = []
    for i, j in zip(*np.nonzero(ok)):
        p = a[i] + t[i, j] * r[i]
        out.append((segs[i][0], segs[i][4] + t[i, j] * segs[i][5], p))
        out.append((segs[j][0], segs[j][4] + u[i, j] * segs[j][5], p))
    return out


def _length(chain):
    d = np.diff(chain, axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _point_at(chain, cum, s):
    s = min(max(s, 0.0), cum[-1])
    k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(chain) - 2)
    seg = cum[k + 1] - cum[k]
    f = (s - cum[k]) / seg if seg > 0 else 0.0
    return chain[k] + f * (chain[k + 1] - chain[k])


def _branch_count(dirs, min_branch, min_support=1):
    """Count direction clusters on the circle; gaps below min_branch join.

    ``dirs`` holds (angle, chain index) pairs. A cluster counts only when at
    least ``min_support`` distinct chains feed it.
    """
    if not dirs:
        return 0
    order = sorted((a % (2 * math.pi), c) for a, c in dirs)
    ang = np.array([a for a, _ in order])
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
    cuts = np.nonzero(gaps >= min_branch)[0]
    if len(cuts) <= 1:
        return 1
    n = len(order)
    count = 0
    for a, b in zip(cuts, np.roll(cuts, -1)):
        end = b if b > a else b + n
        if len({order[k % n][1] for k in range(a + 1, end + 1)}) >= min_support:
            count += 1
    return count


def node_degrees(clip, snap=DEFAULT_SNAP_M, min_branch=DEFAULT_MIN_BRANCH_DEG,
                 simplify_tol=DEFAULT_SIMPLIFY_M, reach=DEFAULT_REACH_M,
                 min_support=DEFAULT_MIN_SUPPORT, min_chain=DEFAULT_MIN_CHAIN_M):
    """Map snapped node (i, j) -> branch count."""
    raw = [c[:, :2] for c in clip.segments]
    tol = min(simplify_tol, max(MIN_SIMPLIFY_M, JITTER_SCALE * jitter(raw)))
    chains = [simplify(c, tol) for c in raw]
    chains = [c for c in chains if len(c) >= 2 and _length(c) >= min_chain]
    cums = []
    for c in chains:
        d = np.diff(c, axis=0)
        cums.append(np.concatenate([[0.0], np.cumsum(np.hypot(d[:, 0], d[:, 1]))]))
    visits = []  # (chain, arc position, point)
    for ci, c in enumerate(chains):
        for k in range(len(c)):
            visits.append((ci, cums[ci][k], c[k]))
    visits.extend(_crossings(chains))
    eps = 1e-9
    directions = defaultdict(list)
    for ci, s, p in visits:
        key = (int(math.floor(p[0] / snap)), int(math.floor(p[1] / snap)))
        cum = cums[ci]
        if s <= eps or s >= cum[-1] - eps:
            # chain ends are cuts at the tile edge or trip ends, not junctions
            continue
        for target in (s + reach, s - reach):
            v = _point_at(chains[ci], cum, target) - p
            if math.hypot(v[0], v[1]) > eps:
                directions[key].append((math.atan2(v[1], v[0]), ci))
    mb = math.radians(min_branch)
    # with only a couple of chains every chain is evidence on its own
    support = max(1, min(min_support, len(chains) // 2))
    return {k: _branch_count(v, mb, support) for k, v in directions.items()}


def classify_heuristic(clip, snap=DEFAULT_SNAP_M, min_branch=DEFAULT_MIN_BRANCH_DEG, **kw):
    if clip.is_empty():
        raise UnclassifiableError(f"tile {clip.code} has no chains")
    degrees = node_degrees(clip, snap, min_branch, **kw)
    hit = any(d >= 3 for d in degrees.values())
    return Prediction(INTERSECTION if hit else STRAIGHT, 1.0 if hit else 0.0)
