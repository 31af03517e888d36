"""Command-line entry point: ``roadtiles <stage> [--config run.json] [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__, pipeline
from .config import PipelineConfig, apply_overrides, load_config
from .errors import RoadTilesError

STAGE_COMMANDS = ("ingest", "tile", "render", "label", "split", "train", "classify", "evaluate", "map")

# flag name -> config field (dotted for nested sections)
FLAG_FIELDS = {
    "waypoints": "waypoints",
    "network": "network",
    "intersections": "intersections",
    "model": "model",
    "out": "out",
    "precision": "precision",
    "mode": "mode",
    "raster_size": "raster_size",
    "classifier": "classifier",
    "seed": "seed",
    "workers": "workers",
    "epochs": "train.epochs",
    "input_size": "train.input_size",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--waypoints", help="waypoint CSV")
    common.add_argument("--network", help="reference network GeoJSON (enables the off-road filter)")
    common.add_argument("--intersections", help="GeoJSON with intersection Points or a network")
    common.add_argument("--model", help="pre-trained model file; skips training")
    common.add_argument("--precision", type=int)
    common.add_argument("--mode", choices=("grayscale", "speed"))
    common.add_argument("--raster-size", type=int)
    common.add_argument("--classifier", choices=("cnn", "heuristic"))
    common.add_argument("--epochs", type=int)
    common.add_argument("--input-size", type=int, help="CNN input resolution")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config field, e.g. train.learning_rate=0.005")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="roadtiles", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write a synthetic network and waypoint CSV")
    for name in STAGE_COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    run = sub.add_parser("run", parents=[common], help="run the full pipeline")
    run.add_argument("--simulate", action="store_true",
                     help="simulate inputs into the output directory first")
    return parser


def make_config(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = []
    for flag, key in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if args.no_figures:
        overrides.append("figures=false")
    apply_overrides(cfg, overrides + list(args.set))
    return cfg.validate()


def _use_simulated(cfg, sim):
    cfg.waypoints = sim["waypoints_path"]
    cfg.intersections = cfg.intersections or sim["network_path"]


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        if args.command == "simulate":
            result = pipeline.stage_simulate(cfg)
        elif args.command == "run":
            if args.simulate:
                _use_simulated(cfg, pipeline.stage_simulate(cfg))
            result = pipeline.run_pipeline(cfg)
        else:
            if args.command == "ingest":
                pipeline.check_inputs(cfg)
            os.makedirs(cfg.out, exist_ok=True)
            result = pipeline.run_stage(args.command, cfg)
    except RoadTilesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    json.dump(result, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
