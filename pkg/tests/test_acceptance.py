"""Acceptance criteria, one PASS/FAIL line per criterion.

Run with pytest (lines are repeated in the terminal summary) or directly:
``python3 tests/test_acceptance.py``.
"""

import hashlib
import json
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from roadtiles import INTERSECTION, STRAIGHT
from roadtiles.classifier.cnn import TrainConfig, gradient_check, init_model
from roadtiles.config import PipelineConfig
from roadtiles.dataset import TileSample, split_dataset
from roadtiles.geocell import cell_bounds, cell_dimensions, encode
from roadtiles.ingest import Journey, WayPoint
from roadtiles.metrics import REFERENCE_SPEED_CONFUSION, REFERENCE_SPEED_TABLE, report
from roadtiles.pipeline import read_predictions, run_pipeline, stage_simulate
from roadtiles.raster import GRAYSCALE, SPEED, render_tile
from roadtiles.tiler import CellFrame, TileClip, assign_tiles

RESULTS = []

REFERENCE_DIMS = [(5009.4e3, 4992.6e3), (1252.3e3, 624.1e3), (156.5e3, 156e3), (39.1e3, 19.5e3),
                  (4.9e3, 4.9e3), (1.2e3, 609.4), (152.9, 152.4), (38.2, 19.0), (4.8, 4.8),
                  (1.2, 0.595), (0.149, 0.149), (0.037, 0.019)]


def record(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------- 1

def check_metric_oracle():
    t0 = time.perf_counter()
    rep = report(np.array(REFERENCE_SPEED_CONFUSION), reference=REFERENCE_SPEED_TABLE)
    elapsed = time.perf_counter() - t0
    ref = REFERENCE_SPEED_TABLE
    cells = []
    for c in (INTERSECTION, STRAIGHT):
        for k in ("precision", "recall", "f1"):
            cells.append((rep.classes[c][k], ref["classes"][c][k]))
    cells.append((rep.accuracy, ref["accuracy"]))
    for k in ("precision", "recall", "f1"):
        cells.append((rep.macro_avg[k], ref["macro_avg"][k]))
    matched = all(abs(round(v, 2) - r) <= 0.005 for v, r in cells)
    wf1 = rep.weighted_avg["f1"]
    flagged = any(f.startswith("weighted_avg.f1") and "0.93" in f for f in rep.flags)
    ok = matched and round(wf1, 2) == 0.95 and flagged and elapsed < 1.0
    return record("1 metric oracle", ok,
                  f"reference report cells matched={matched}, weighted F1={wf1:.4f} flagged={flagged}, {elapsed * 1e3:.1f} ms")


# ---------------------------------------------------------------- 2

def check_geohash_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    lats = rng.uniform(-90, 90, 10_000).tolist()
    lons = rng.uniform(-180, 180, 10_000).tolist()
    bad = 0
    for lat, lon in zip(lats, lons):
        outer = None
        for p in range(1, 13):
            c = encode(lat, lon, p)
            la0, la1, lo0, lo1 = c.bbox
            if not (la0 <= lat <= la1 and lo0 <= lon <= lo1):
                bad += 1
            if encode(*c.center, p).code != c.code or cell_bounds(c.code).bbox != c.bbox:
                bad += 1
            if outer is not None and not (outer[0] <= la0 and la1 <= outer[1] and outer[2] <= lo0 and lo1 <= outer[3]
                                          and c.code.startswith(prev)):
                bad += 1
            outer, prev = c.bbox, c.code
    dims_ok = all(abs(w - ew) / ew <= 0.02 and abs(h - eh) / eh <= 0.02
                  for (w, h), (ew, eh) in zip((cell_dimensions(p) for p in range(1, 13)), REFERENCE_DIMS))
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and dims_ok and elapsed < 5.0
    return record("2 geohash suite", ok,
                  f"120000 encodes, {bad} containment/round-trip/nesting failures, "
                  f"cell sizes within 2%={dims_ok}, {elapsed:.2f} s")


# ---------------------------------------------------------------- 3

def random_polyline(rng, jid, base):
    lat_min, lat_max, lon_min, lon_max = base.bbox
    dlat, dlon = lat_max - lat_min, lon_max - lon_min
    n = int(rng.integers(2, 10))
    lat = lat_min + rng.uniform(-4, 5, n) * dlat
    lon = lon_min + rng.uniform(-4, 5, n) * dlon
    speed = rng.uniform(0, 30, n)
    return Journey(jid, tuple(WayPoint(jid, i, float(a), float(b), float(s))
                              for i, (a, b, s) in enumerate(zip(lat, lon, speed))))


def check_clipping_conservation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    outside = 0
    multi = 0
    for k in range(1000):
        base = encode(float(rng.uniform(-60, 60)), float(rng.uniform(-170, 170)), 8)
        j = random_polyline(rng, f"j{k}", base)
        ref = CellFrame.of(base)
        tiles = assign_tiles([j], 8)
        multi += len(tiles) > 1
        x, y = ref.forward(np.array([p.lat for p in j.points]), np.array([p.lon for p in j.points]))
        original = float(np.hypot(np.diff(x), np.diff(y)).sum())
        clipped = 0.0
        for clip in tiles.values():
            f = CellFrame.of(clip.cell)
            w, h = clip.frame_size
            for ch in clip.segments:
                if (ch[:, 0].min() < -1e-9 * w or ch[:, 0].max() > w * (1 + 1e-9)
                        or ch[:, 1].min() < -1e-9 * h or ch[:, 1].max() > h * (1 + 1e-9)):
                    outside += 1
                lat, lon = f.inverse(ch[:, 0], ch[:, 1])
                cx, cy = ref.forward(lat, lon)
                clipped += float(np.hypot(np.diff(cx), np.diff(cy)).sum())
        worst = max(worst, abs(clipped - original) / original)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and outside == 0 and elapsed < 10.0
    return record("3 clipping conservation", ok,
                  f"1000 polylines ({multi} multi-cell), max relative length error {worst:.2e}, "
                  f"{outside} chains outside their cell, {elapsed:.2f} s")


# ---------------------------------------------------------------- 4

def check_raster_determinism():
    cell = encode(42.0, -93.6, 8)
    w, h = cell.frame_size()
    clip = TileClip(cell, [np.array([[0.0, 0.1 * h, 3.0], [0.6 * w, 0.9 * h, 12.0], [w, 0.2 * h, np.nan]]),
                           np.array([[0.2 * w, 0.0, 30.0], [0.3 * w, h, 8.0]])], 10)
    ref = render_tile(clip, 64, SPEED).tobytes()
    outs = []
    for workers in (1, 2, 4, 8):
        with ThreadPoolExecutor(workers) as ex:
            outs.extend(ex.map(lambda _: render_tile(clip, 64, SPEED).tobytes(), range(25)))
    identical = len(outs) == 100 and all(o == ref for o in outs)
    golden = render_tile(TileClip(cell, [np.array([[0.0, h / 2, np.nan], [w, h / 2, np.nan]])], 10),
                         64, GRAYSCALE, line_width=1)
    drawn = {tuple(p) for p in np.argwhere(golden.pixels[:, :, 0] != 255)}
    expected = {(32, c) for c in range(64)}
    golden_ok = drawn == expected and bool((golden.pixels[32, :, 0] == 0).all())
    return record("4 raster determinism", identical and golden_ok,
                  f"100 renders over 1/2/4/8 workers identical={identical}, golden row-32 raster exact={golden_ok}")


# ---------------------------------------------------------------- 5

def check_gradient():
    t0 = time.perf_counter()
    cell = encode(42.0, -93.6, 8)
    w, h = cell.frame_size()
    clip = TileClip(cell, [np.array([[0.0, h / 2, 5.0], [w, h / 2, 5.0]]),
                           np.array([[w / 2, 0.0, 20.0], [w / 2, h, 20.0]])], 10)
    worst = 0.0
    for channels, mode in ((3, SPEED), (1, GRAYSCALE)):
        model = init_model(64, channels, seed=5)
        rng = np.random.default_rng(6)
        for k in ("conv1_b", "conv2_b", "fc_b"):
            model.params[k] = rng.normal(0.0, 0.1, model.params[k].shape).astype(np.float32)
        sample = TileSample(cell.code, render_tile(clip, 640, mode), INTERSECTION)
        worst = max(worst, gradient_check(model, sample, epsilon=1e-4, n_params=100, seed=1))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 30.0
    return record("5 gradient check", ok,
                  f"64x64 reference net, 2x100 parameters, max relative error {worst:.2e}, {elapsed:.2f} s")


# ---------------------------------------------------------------- 6

def benchmark_config(root, **kw):
    cfg = PipelineConfig(out=os.path.join(root, "sim"), raster_size=64, figures=False, seed=0,
                         train=TrainConfig(epochs=30, input_size=64, seed=0))
    sim = stage_simulate(cfg)
    base = dict(waypoints=sim["waypoints_path"], intersections=sim["network_path"])
    base.update(kw)
    return PipelineConfig(raster_size=64, figures=False, seed=0,
                          train=TrainConfig(epochs=30, input_size=64, seed=0), **base)


def labelled_accuracy(out):
    preds = read_predictions(os.path.join(out, "predictions.jsonl"))
    labels = [json.loads(line) for line in open(os.path.join(out, "labels.jsonl"))]
    hits = sum(preds[r["code"]].label == r["label"] for r in labels)
    return hits / len(labels), len(labels)


def run_benchmark():
    t0 = time.perf_counter()
    root = tempfile.mkdtemp(prefix="roadtiles-bench-")
    try:
        out = {}
        for name, kw in (("heuristic", dict(classifier="heuristic", mode=SPEED)),
                         ("speed", dict(classifier="cnn", mode=SPEED)),
                         ("grayscale", dict(classifier="cnn", mode=GRAYSCALE))):
            cfg = benchmark_config(root, out=os.path.join(root, name), **kw)
            summary = run_pipeline(cfg)
            out[name] = {"held_out": summary["accuracy"], "tiles": summary["tiles"],
                         "test": summary["stages"]["split"]["test"]}
            if name == "heuristic":
                out[name]["labelled"], out[name]["n_labelled"] = labelled_accuracy(cfg.out)
        out["elapsed"] = time.perf_counter() - t0
        return out
    finally:
        shutil.rmtree(root, ignore_errors=True)


def check_benchmark(bench):
    h, s, g = bench["heuristic"], bench["speed"], bench["grayscale"]
    a = record("6a heuristic accuracy", h["labelled"] >= 0.90,
               f"{h['labelled']:.3f} over {h['n_labelled']} labelled tiles "
               f"(held-out {h['held_out']:.3f}) of {h['tiles']} tiles, threshold 0.90")
    b = record("6b CNN speed-coloured held-out accuracy", s["held_out"] >= 0.85,
               f"{s['held_out']:.3f} on {s['test']} held-out tiles after 30 epochs, threshold 0.85")
    c = record("6c speed >= grayscale", s["held_out"] >= g["held_out"],
               f"speed {s['held_out']:.3f} vs grayscale {g['held_out']:.3f}")
    d = record("6 runtime", bench["elapsed"] < 600.0, f"{bench['elapsed']:.0f} s for all three runs, limit 600 s")
    return a and b and c and d


# ---------------------------------------------------------------- 7

def check_split_sizing():
    samples = ([TileSample(f"i{k:05d}", None, INTERSECTION) for k in range(553)]
               + [TileSample(f"s{k:05d}", None, STRAIGHT) for k in range(1664)])
    train, test = split_dataset(samples, 0.10, seed=0)
    again = split_dataset(samples, 0.10, seed=0)
    tr, te = {s.code for s in train}, {s.code for s in test}
    disjoint = not (tr & te)
    exhaustive = (tr | te) == {s.code for s in samples} and len(train) + len(test) == len(samples)
    stable = [s.code for s in again[1]] == [s.code for s in test]
    ok = len(test) == 221 and disjoint and exhaustive and stable
    return record("7 split sizing", ok,
                  f"2217 -> {len(test)} test / {len(train)} train, disjoint={disjoint}, "
                  f"exhaustive={exhaustive}, seed-stable={stable}")


# ---------------------------------------------------------------- 8

def tree_digest(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = hashlib.sha256(fh.read()).hexdigest()
    return out


def check_reproducibility():
    root = tempfile.mkdtemp(prefix="roadtiles-repro-")
    try:
        cfg = PipelineConfig(out=os.path.join(root, "sim"), raster_size=64,
                             train=TrainConfig(epochs=3, input_size=32, seed=0))
        cfg.simulate.n_journeys = 80
        sim = stage_simulate(cfg)
        cfg.waypoints, cfg.intersections = sim["waypoints_path"], sim["network_path"]
        cfg.out = os.path.join(root, "run")
        run_pipeline(cfg)
        first = tree_digest(cfg.out)
        shutil.rmtree(cfg.out)
        run_pipeline(cfg)
        second = tree_digest(cfg.out)
    finally:
        shutil.rmtree(root, ignore_errors=True)
    ok = first == second and "model.bin" in first and len(first) > 10
    return record("8 reproducibility", ok,
                  f"{len(first)} artifacts, identical={first == second}, model included={'model.bin' in first}")


# ---------------------------------------------------------------- pytest

def test_1_metric_oracle():
    assert check_metric_oracle()


def test_2_geohash_suite():
    assert check_geohash_suite()


def test_3_clipping_conservation():
    assert check_clipping_conservation()


def test_4_raster_determinism():
    assert check_raster_determinism()


def test_5_gradient_check():
    assert check_gradient()


@pytest.fixture(scope="module")
def benchmark():
    return run_benchmark()


def test_6_synthetic_benchmark(benchmark):
    assert check_benchmark(benchmark)


def test_7_split_sizing():
    assert check_split_sizing()


def test_8_reproducibility():
    assert check_reproducibility()


if __name__ == "__main__":
    checks = [check_metric_oracle, check_geohash_suite, check_clipping_conservation, check_raster_determinism,
              check_gradient, lambda: check_benchmark(run_benchmark()), check_split_sizing, check_reproducibility]
    sys.exit(0 if all([c() for c in checks]) else 1)
