"""Run configuration: one JSON document, every field overridable from the CLI."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .classifier.base import DEFAULT_THRESHOLD
from .classifier.cnn import TrainConfig
from .classifier.heuristic import DEFAULT_MIN_BRANCH_DEG, DEFAULT_SNAP_M
from .dataset import DEFAULT_AUGMENT_K, DEFAULT_MIN_POINTS, DEFAULT_TEST_FRACTION
from .errors import ConfigError
from .geocell import MAX_PRECISION
from .ingest import DEFAULT_MAX_OFFSET_M
from .raster import DEFAULT_LINE_WIDTH, DEFAULT_SIZE, DEFAULT_V_MAX, MODES, SPEED

CLASSIFIERS = ("cnn", "heuristic")


@dataclass
class SimulateConfig:
    kind: str = "perturbed-grid"
    rows: int = 5
    cols: int = 5
    spacing: float = 200.0
    origin: tuple = (42.0, -93.6)
    n_journeys: int = 200
    sample_interval_s: float = 1.0
    cruise_speed_mps: float = 15.0
    slow_factor: float = 0.3
    slow_radius_m: float = 40.0
    gps_noise_m: float = 2.0
    seed: int = 42


@dataclass
class PipelineConfig:
    waypoints: str | None = None
    network: str | None = None  # reference network for the off-road filter
    intersections: str | None = None  # GeoJSON with intersection Point features
    model: str | None = None  # pre-trained model; skips training when set
    out: str = "out"
    precision: int = 8
    max_offset: float = DEFAULT_MAX_OFFSET_M
    raster_size: int = DEFAULT_SIZE
    mode: str = SPEED
    v_max: float = DEFAULT_V_MAX
    line_width: int = DEFAULT_LINE_WIDTH
    min_points: int = DEFAULT_MIN_POINTS
    test_fraction: float = DEFAULT_TEST_FRACTION
    augment_k: int = DEFAULT_AUGMENT_K
    classifier: str = "cnn"
    threshold: float = DEFAULT_THRESHOLD
    snap: float = DEFAULT_SNAP_M
    min_branch: float = DEFAULT_MIN_BRANCH_DEG
    seed: int = 0
    workers: int = 1
    figures: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    def validate(self):
        if not 1 <= self.precision <= MAX_PRECISION:
            raise ConfigError(f"precision must be in 1..{MAX_PRECISION}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"classifier must be one of {CLASSIFIERS}")
        if self.raster_size < 16 or self.line_width < 1:
            raise ConfigError("raster_size must be >= 16 and line_width >= 1")
        if not self.v_max > 0 or not self.max_offset > 0:
            raise ConfigError("v_max and max_offset must be positive")
        if self.min_points < 1 or self.augment_k < 0 or self.workers < 1:
            raise ConfigError("min_points and workers must be >= 1, augment_k >= 0")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie strictly between 0 and 1")
        if not 0 <= self.threshold <= 1:
            raise ConfigError("threshold must lie in [0, 1]")
        self.train.validate()
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["simulate"]["origin"] = list(self.simulate.origin)
        return d

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        train = TrainConfig(**_only(TrainConfig, d.pop("train", {}) or {}, "train"))
        sim = d.pop("simulate", {}) or {}
        sim = SimulateConfig(**_only(SimulateConfig, sim, "simulate"))
        sim.origin = tuple(sim.origin)
        cfg = cls(train=train, simulate=sim, **d)
        if base_dir:
            for name in ("waypoints", "network", "intersections", "model", "out"):
                value = getattr(cfg, name)
                if value and not os.path.isabs(value):
                    setattr(cfg, name, os.path.normpath(os.path.join(base_dir, value)))
        return cfg


def _only(kind, d, section):
    known = {f.name for f in dataclasses.fields(kind)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {section} fields: {', '.join(sorted(unknown))}")
    return d


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return PipelineConfig.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def apply_overrides(cfg, overrides):
    """Set dotted ``key=value`` overrides (``train.epochs=5``); values parse as JSON."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            if not hasattr(target, p):
                raise ConfigError(f"unknown config section {p!r}")
            target = getattr(target, p)
        if not hasattr(target, parts[-1]):
            raise ConfigError(f"unknown config field {key!r}")
        setattr(target, parts[-1], value)
    return cfg
