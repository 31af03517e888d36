"""Pipeline stages and the end-to-end run.

Every stage reads its inputs from, and writes its outputs to, the run's output
directory, so stages can be rerun one at a time from the CLI. ``run_pipeline``
chains them and writes ``summary.json``.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import INTERSECTION, STRAIGHT
from .classifier import cnn, heuristic, modelio
from .classifier.base import Prediction
from .dataset import TileSample, augment_all, label_cells, manifest, read_labels, split_dataset, write_labels
from .errors import ConfigError, FormatError, InputError, RoadTilesError, StageError
from .geocell import cell_bounds
from .ingest import build_journeys, filter_to_reference, read_waypoints, write_waypoints
from .metrics import confusion, report, write_confusion_csv, write_report
from .network import load_network, save_network
from .raster import load_png, render_tile, save_png
from .simgen import SimConfig, generate_network, simulate_trajectories
from .tiler import TileClip, assign_tiles, write_tile_index

log = logging.getLogger(__name__)

MAP_COLORS = {INTERSECTION: "green", STRAIGHT: "blue"}

FILES = {
    "journeys": "journeys.csv",
    "clips": "clips.jsonl",
    "tile_index": "tile_index.jsonl",
    "tiles": "tiles",
    "labels": "labels.jsonl",
    "manifest": "manifest.json",
    "model": "model.bin",
    "losses": "losses.json",
    "predictions": "predictions.jsonl",
    "report": "report.json",
    "confusion": "confusion.csv",
    "map": "map.geojson",
    "figures": "figures",
    "summary": "summary.json",
    "config": "config.json",
}


def path(cfg, key):
    return os.path.join(cfg.out, FILES[key])


def _write_json(doc, p):
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(p):
    try:
        with open(p, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"missing stage input {p}; run the earlier stage first") from None


def _jsonl(p):
    try:
        with open(p, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except FileNotFoundError:
        raise InputError(f"missing stage input {p}; run the earlier stage first") from None


def check_inputs(cfg, need_waypoints=True):
    """Fail before doing any work if a referenced input file is absent."""
    names = ["network", "intersections", "model"]
    if need_waypoints:
        if not cfg.waypoints:
            raise ConfigError("no waypoint file configured")
        names.insert(0, "waypoints")
    for name in names:
        p = getattr(cfg, name)
        if p and not os.path.isfile(p):
            raise ConfigError(f"{name} file not found: {p}")


def _map_workers(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- stages

def stage_simulate(cfg):
    s = cfg.simulate
    net = generate_network(s.kind, s.rows, s.cols, s.spacing, tuple(s.origin), s.seed)
    sim = SimConfig(s.sample_interval_s, s.cruise_speed_mps, s.slow_factor, s.slow_radius_m,
                    s.gps_noise_m, s.seed)
    journeys = simulate_trajectories(net, s.n_journeys, sim)
    os.makedirs(cfg.out, exist_ok=True)
    wp_path = os.path.join(cfg.out, "waypoints.csv")
    net_path = os.path.join(cfg.out, "network.geojson")
    with open(wp_path, "w", encoding="utf-8", newline="") as fh:
        write_waypoints([p for j in journeys for p in j.points], fh)
    save_network(net, net_path)
    return {"journeys": len(journeys), "waypoints": sum(len(j) for j in journeys),
            "nodes": len(net.nodes), "edges": len(net.edges),
            "intersections": len(net.intersections()),
            "waypoints_path": wp_path, "network_path": net_path}


def stage_ingest(cfg):
    points, rejected = read_waypoints(cfg.waypoints)
    journeys, dropped = build_journeys(points)
    counts = {"waypoints_loaded": len(points), "waypoints_rejected": rejected,
              "journeys": len(journeys), "journeys_dropped": dropped}
    if cfg.network:
        journeys, removed, lost = filter_to_reference(journeys, load_network(cfg.network), cfg.max_offset)
        counts.update(filter_points_removed=removed, filter_journeys_dropped=lost,
                      journeys_kept=len(journeys))
    else:
        counts["journeys_kept"] = len(journeys)
    os.makedirs(cfg.out, exist_ok=True)
    with open(path(cfg, "journeys"), "w", encoding="utf-8", newline="") as fh:
        write_waypoints([p for j in journeys for p in j.points], fh)
    return counts


def _chain_to_json(chain):
    return [[float(x), float(y), None if math.isnan(v) else float(v)] for x, y, v in chain]


def _chain_from_json(rows):
    return np.array([[x, y, float("nan") if v is None else v] for x, y, v in rows], dtype=float)


def write_clips(tiles, p):
    with open(p, "w", encoding="utf-8") as fh:
        for code in sorted(tiles):
            c = tiles[code]
            rec = {"code": code, "point_count": c.point_count, "journey_ids": list(c.journey_ids),
                   "chains": [_chain_to_json(ch) for ch in c.segments]}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_clips(p):
    tiles = {}
    for rec in _jsonl(p):
        try:
            tiles[rec["code"]] = TileClip(
                cell=cell_bounds(rec["code"]),
                segments=[_chain_from_json(ch) for ch in rec["chains"]],
                point_count=int(rec["point_count"]),
                journey_ids=list(rec.get("journey_ids", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad clip record {rec.get('code')!r}: {exc}") from exc
    return tiles


def stage_tile(cfg):
    points, _ = read_waypoints(path(cfg, "journeys"))
    journeys, _ = build_journeys(points)
    tiles = assign_tiles(journeys, cfg.precision)
    write_clips(tiles, path(cfg, "clips"))
    with open(path(cfg, "tile_index"), "w", encoding="utf-8") as fh:
        write_tile_index(tiles, fh)
    return {"tiles": len(tiles), "chains": sum(len(t.segments) for t in tiles.values())}


def stage_render(cfg):
    tiles = read_clips(path(cfg, "clips"))
    tdir = path(cfg, "tiles")
    os.makedirs(tdir, exist_ok=True)
    for name in os.listdir(tdir):
        if name.endswith(".png"):
            os.remove(os.path.join(tdir, name))

    def work(code):
        r = render_tile(tiles[code], cfg.raster_size, cfg.mode, cfg.v_max, cfg.line_width)
        save_png(r, os.path.join(tdir, f"{code}.png"))
        return r.empty

    empties = _map_workers(work, sorted(tiles), cfg.workers)
    return {"rasters": len(tiles), "empty_rasters": int(sum(empties))}


def _load_intersections(cfg):
    if not cfg.intersections:
        raise ConfigError("labelling needs an intersections GeoJSON file")
    return load_network(cfg.intersections).intersection_points()


def stage_label(cfg):
    tiles = read_clips(path(cfg, "clips"))
    labels, excluded = label_cells(tiles, _load_intersections(cfg), cfg.min_points)
    with open(path(cfg, "labels"), "w", encoding="utf-8") as fh:
        write_labels(labels, fh)
    n_int = sum(1 for _, l in labels if l == INTERSECTION)
    return {"labeled": len(labels), "sparse_excluded": excluded,
            "intersection_labels": n_int, "straight_labels": len(labels) - n_int}


def _load_labels(cfg):
    with open(path(cfg, "labels"), encoding="utf-8") as fh:
        return read_labels(fh)


def _tile_raster(cfg, code):
    return load_png(os.path.join(path(cfg, "tiles"), f"{code}.png"), cfg.mode)


def _placeholder_samples(labels):
    # split only needs codes and labels
    return [TileSample(code, None, label) for code, label in labels]


def stage_split(cfg):
    labels = _load_labels(cfg)
    train, test = split_dataset(_placeholder_samples(labels), cfg.test_fraction, cfg.seed)
    doc = manifest(train, test, cfg.test_fraction, cfg.augment_k, cfg.seed)
    _write_json(doc, path(cfg, "manifest"))
    return {"train": len(train), "test": len(test)}


def _split_samples(cfg):
    labels = dict(_load_labels(cfg))
    man = _read_json(path(cfg, "manifest"))
    train = [TileSample(c, _tile_raster(cfg, c), labels[c]) for c in man["train"]]
    test = [TileSample(c, _tile_raster(cfg, c), labels[c]) for c in man["test"]]
    return train, test


def stage_train(cfg):
    if cfg.classifier != "cnn":
        return {"trained": False}
    train, _ = _split_samples(cfg)
    augmented = augment_all(train, cfg.augment_k, cfg.seed)
    model, losses = cnn.train_model(train + augmented, cfg.train)
    modelio.save_model(model, path(cfg, "model"))
    _write_json({"losses": losses}, path(cfg, "losses"))
    if cfg.figures:
        from .plotting import loss_figure
        os.makedirs(path(cfg, "figures"), exist_ok=True)
        loss_figure(losses, os.path.join(path(cfg, "figures"), "loss.png"))
    return {"trained": True, "augmented": len(augmented), "train_images": len(train) + len(augmented),
            "first_loss": losses[0], "final_loss": losses[-1]}


def stage_classify(cfg):
    tiles = read_clips(path(cfg, "clips"))
    codes = sorted(tiles)
    if cfg.classifier == "heuristic":
        preds = {}
        for code in codes:
            try:
                preds[code] = heuristic.classify_heuristic(tiles[code], cfg.snap, cfg.min_branch)
            except heuristic.UnclassifiableError:
                continue
    else:
        model_path = cfg.model or path(cfg, "model")
        model = modelio.load_model(model_path)
        rasters = _map_workers(lambda c: _tile_raster(cfg, c), codes, cfg.workers)
        scores = cnn.predict_scores(model, rasters)
        preds = {c: Prediction.from_score(s, cfg.threshold) for c, s in zip(codes, scores)}
    with open(path(cfg, "predictions"), "w", encoding="utf-8") as fh:
        for code in sorted(preds):
            p = preds[code]
            fh.write(json.dumps({"code": code, "label": p.label, "score": p.score}, sort_keys=True) + "\n")
    return {"predictions": len(preds), "predicted_intersections":
            sum(1 for p in preds.values() if p.label == INTERSECTION)}


def read_predictions(p):
    return {r["code"]: Prediction(r["label"], float(r["score"])) for r in _jsonl(p)}


def stage_evaluate(cfg):
    preds = read_predictions(path(cfg, "predictions"))
    labels = dict(_load_labels(cfg))
    man = _read_json(path(cfg, "manifest"))
    missing = [c for c in man["test"] if c not in preds]
    if missing:
        raise FormatError(f"no prediction for test tiles: {', '.join(missing[:5])}")
    cm = confusion((labels[c], preds[c].label) for c in man["test"])
    rep = report(cm)
    write_report(rep, cm, path(cfg, "report"))
    write_confusion_csv(cm, path(cfg, "confusion"))
    if cfg.figures:
        from .plotting import confusion_figure
        os.makedirs(path(cfg, "figures"), exist_ok=True)
        confusion_figure(cm, os.path.join(path(cfg, "figures"), "confusion.png"),
                         title=f"Confusion matrix ({cfg.classifier}, {cfg.mode})")
    return {"evaluated": cm.total, "accuracy": rep.accuracy, "confusion": cm.tolist()}


def export_map(cells):
    """GeoJSON FeatureCollection, one closed Polygon per (GeoCell, Prediction)."""
    features = []
    for cell, pred in sorted(cells, key=lambda cp: cp[0].code):
        lat_min, lat_max, lon_min, lon_max = cell.bbox
        ring = [[lon_min, lat_min], [lon_max, lat_min], [lon_max, lat_max],
                [lon_min, lat_max], [lon_min, lat_min]]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {"geohash": cell.code, "class": pred.label, "score": pred.score,
                           "color": MAP_COLORS[pred.label]},
        })
    return {"type": "FeatureCollection", "features": features}


def stage_map(cfg):
    preds = read_predictions(path(cfg, "predictions"))
    doc = export_map([(cell_bounds(c), p) for c, p in preds.items()])
    _write_json(doc, path(cfg, "map"))
    if cfg.figures:
        from .plotting import map_figure
        net = None
        for candidate in (cfg.network, cfg.intersections):
            if candidate:
                net = load_network(candidate)
                break
        os.makedirs(path(cfg, "figures"), exist_ok=True)
        map_figure(preds, os.path.join(path(cfg, "figures"), "map.png"), net)
    return {"map_features": len(doc["features"])}


STAGES = {
    "ingest": stage_ingest,
    "tile": stage_tile,
    "render": stage_render,
    "label": stage_label,
    "split": stage_split,
    "train": stage_train,
    "classify": stage_classify,
    "evaluate": stage_evaluate,
    "map": stage_map,
}


def run_stage(name, cfg):
    try:
        return STAGES[name](cfg)
    except StageError:
        raise
    except RoadTilesError as exc:
        raise StageError(name, exc) from exc


def run_pipeline(cfg):
    """Run every stage in order and write ``summary.json``; returns the summary."""
    cfg.validate()
    check_inputs(cfg)
    if cfg.model and cfg.classifier == "cnn":
        order = [s for s in STAGES if s != "train"]
    else:
        order = list(STAGES)
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(cfg.to_dict(), path(cfg, "config"))
    stages = {}
    for name in order:
        log.info("stage %s", name)
        stages[name] = run_stage(name, cfg)
    summary = {
        "stages": stages,
        "tiles": stages["tile"]["tiles"],
        "report": FILES["report"],
        "map": FILES["map"],
        "accuracy": stages["evaluate"]["accuracy"],
    }
    _write_json(summary, path(cfg, "summary"))
    return summary
