"""Small convolutional tile classifier written directly on numpy.

Architecture (fixed): conv 3x3x8 -> relu -> maxpool 2 -> conv 3x3x16 -> relu
-> maxpool 2 -> flatten -> dense -> softmax over [intersection, straight].
Convolutions are 'valid' with stride 1. Weights are stored as float32; all
arithmetic runs in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import CLASSES, INTERSECTION
from ..errors import ConfigError, DivergenceError, ShapeError
from ..raster import BACKGROUND, downscale
from .base import DEFAULT_THRESHOLD, Prediction

FORMAT_VERSION = 1
PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b")
CONV1_FILTERS = 8
CONV2_FILTERS = 16
KERNEL = 3
# gradients below this magnitude are compared in absolute terms
GRADCHECK_FLOOR = 1e-7


@dataclass
class TrainConfig:
    epochs: int = 100
    batch: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    input_size: int = 64
    seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch < 1 or self.input_size < 16:
            raise ConfigError("epochs and batch must be >= 1 and input_size >= 16")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("learning_rate must be >= 0 and momentum in [0, 1)")


@dataclass
class Model:
    input_size: int
    channels: int
    params: dict
    seed: int = 0
    classes: tuple = CLASSES
    version: int = FORMAT_VERSION
    layers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            self.layers = layer_specs(self.input_size, self.channels)
        for name, shape in param_shapes(self.input_size, self.channels).items():
            arr = self.params.get(name)
            if arr is None or arr.shape != shape:
                raise ShapeError(f"parameter {name} must have shape {shape}")
            self.params[name] = np.ascontiguousarray(arr, dtype=np.float32)

    def n_params(self):
        return sum(p.size for p in self.params.values())


def _pooled(n):
    return (n - KERNEL + 1) // 2


def feature_size(input_size):
    return _pooled(_pooled(input_size))


def layer_specs(input_size, channels):
    s1 = input_size - KERNEL + 1
    p1 = s1 // 2
    s2 = p1 - KERNEL + 1
    p2 = s2 // 2
    flat = CONV2_FILTERS * p2 * p2
    return [
        {"kind": "conv", "shape": [CONV1_FILTERS, channels, KERNEL, KERNEL], "stride": 1},
        {"kind": "relu", "shape": [CONV1_FILTERS, s1, s1], "stride": 1},
        {"kind": "maxpool", "shape": [2, 2], "stride": 2},
        {"kind": "conv", "shape": [CONV2_FILTERS, CONV1_FILTERS, KERNEL, KERNEL], "stride": 1},
        {"kind": "relu", "shape": [CONV2_FILTERS, s2, s2], "stride": 1},
        {"kind": "maxpool", "shape": [2, 2], "stride": 2},
        {"kind": "dense", "shape": [flat, len(CLASSES)], "stride": 1},
        {"kind": "softmax", "shape": [len(CLASSES)], "stride": 1},
    ]


def param_shapes(input_size, channels):
    f = feature_size(input_size)
    if f < 1:
        raise ConfigError(f"input size {input_size} too small for the network")
    return {
        "conv1_w": (CONV1_FILTERS, channels, KERNEL, KERNEL),
        "conv1_b": (CONV1_FILTERS,),
        "conv2_w": (CONV2_FILTERS, CONV1_FILTERS, KERNEL, KERNEL),
        "conv2_b": (CONV2_FILTERS,),
        "fc_w": (CONV2_FILTERS * f * f, len(CLASSES)),
        "fc_b": (len(CLASSES),),
    }


def init_model(input_size, channels, seed=0):
    """He-normal weights, zero biases, from a seeded generator."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(input_size, channels).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            params[name] = (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(np.float32)
    return Model(input_size, channels, params, seed=seed)


def zero_model(input_size, channels):
    params = {n: np.zeros(s, dtype=np.float32) for n, s in param_shapes(input_size, channels).items()}
    return Model(input_size, channels, params)


# ---------------------------------------------------------------- layers

def _conv_forward(x, w, b):
    n, c, h, wd = x.shape
    f = w.shape[0]
    win = sliding_window_view(x, (KERNEL, KERNEL), axis=(2, 3))  # n c ho wo k k
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * KERNEL * KERNEL)
    out = cols @ w.reshape(f, -1).T + b
    return out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, x_shape, w, need_dx):
    n, c, h, wd = x_shape
    f = w.shape[0]
    ho, wo = dout.shape[2], dout.shape[3]
    dmat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dmat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dmat @ w.reshape(f, -1)).reshape(n, ho, wo, c, KERNEL, KERNEL)
    dx = np.zeros(x_shape)
    for i in range(KERNEL):
        for j in range(KERNEL):
            dx[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_forward(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    blocks = (x[:, :, :2 * h2, :2 * w2]
              .reshape(n, c, h2, 2, w2, 2)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, h2, w2, 4))
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _pool_backward(dout, arg, x_shape):
    n, c, h, w = x_shape
    h2, w2 = dout.shape[2], dout.shape[3]
    blocks = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, :2 * h2, :2 * w2] = (blocks.reshape(n, c, h2, w2, 2, 2)
                                  .transpose(0, 1, 2, 4, 3, 5)
                                  .reshape(n, c, 2 * h2, 2 * w2))
    return dx


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, x):
    """Class probabilities for a float64 (n, c, h, w) batch, plus the cache."""
    p = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    z1, cols1 = _conv_forward(x, p["conv1_w"], p["conv1_b"])
    a1 = np.maximum(z1, 0.0)
    p1, arg1 = _pool_forward(a1)
    z2, cols2 = _conv_forward(p1, p["conv2_w"], p["conv2_b"])
    a2 = np.maximum(z2, 0.0)
    p2, arg2 = _pool_forward(a2)
    flat = p2.reshape(len(x), -1)
    logits = flat @ p["fc_w"] + p["fc_b"]
    probs = softmax(logits)
    cache = (x, p, z1, cols1, a1, arg1, p1, z2, cols2, a2, arg2, p2, flat, logits)
    return probs, cache


def _nll(logits, y):
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return lse - logits[np.arange(len(y)), y]


def mean_loss(params, x, y):
    _, cache = forward(params, x)
    return float(_nll(cache[-1], y).mean())


def loss_and_grads(params, x, y):
    """Mean cross-entropy of integer targets ``y`` and its parameter gradients."""
    probs, cache = forward(params, x)
    x, p, z1, cols1, a1, arg1, p1, z2, cols2, a2, arg2, p2, flat, logits = cache
    n = len(x)
    per_sample = _nll(logits, y)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads = {"fc_w": flat.T @ dlogits, "fc_b": dlogits.sum(axis=0)}
    dp2 = (dlogits @ p["fc_w"].T).reshape(p2.shape)
    da2 = _pool_backward(dp2, arg2, a2.shape)
    dz2 = da2 * (z2 > 0)
    dp1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(dz2, cols2, p1.shape, p["conv2_w"], True)
    da1 = _pool_backward(dp1, arg1, a1.shape)
    dz1 = da1 * (z1 > 0)
    _, grads["conv1_w"], grads["conv1_b"] = _conv_backward(dz1, cols1, x.shape, p["conv1_w"], False)
    return per_sample, grads


# ---------------------------------------------------------------- data

def prepare(pixels, input_size):
    """(h, w, c) uint8 raster -> (c, s, s) float64 with ink near 1, background 0."""
    img = downscale(np.asarray(pixels), input_size)
    return ((BACKGROUND - img) / 255.0).transpose(2, 0, 1)


def _stack(samples, input_size, channels):
    xs = []
    for s in samples:
        if s.raster.channels != channels:
            raise ShapeError(f"sample {s.code} has {s.raster.channels} channels, model expects {channels}")
        xs.append(prepare(s.raster.pixels, input_size))
    return np.stack(xs)


def _targets(samples):
    return np.array([CLASSES.index(s.label) for s in samples], dtype=np.int64)


def _epoch(params, velocity, x, y, perm, config):
    """One pass over the data in ``perm`` order; updates in place, returns per-sample losses."""
    per_sample = np.zeros(len(perm))
    for start in range(0, len(perm), config.batch):
        idx = perm[start:start + config.batch]
        batch_loss, grads = loss_and_grads(params, x[idx], y[idx])
        per_sample[idx] = batch_loss
        for k in PARAM_ORDER:
            velocity[k] = config.momentum * velocity[k] - config.learning_rate * grads[k]
            params[k] = (params[k].astype(np.float64) + velocity[k]).astype(np.float32)
    return per_sample


def train_model(train, config=TrainConfig()):
    """Fit a fresh model with minibatch SGD + momentum.

    Returns ``(model, losses)`` with one mean training loss per epoch. The
    epoch loss averages per-sample losses in sample order, so it does not
    depend on how batches were drawn.
    """
    config.validate()
    train = list(train)
    if len({s.label for s in train}) < 2:
        raise ConfigError("training set must contain both classes")
    channels = train[0].raster.channels
    x = _stack(train, config.input_size, channels)
    y = _targets(train)
    model = init_model(config.input_size, channels, config.seed)
    params = model.params
    velocity = {k: np.zeros(v.shape) for k, v in params.items()}
    order_rng = np.random.default_rng([config.seed, 1])
    losses = []
    n = len(train)
    for epoch in range(1, config.epochs + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            per_sample = _epoch(params, velocity, x, y, order_rng.permutation(n), config)
        epoch_loss = float(per_sample.sum() / n)
        if not math.isfinite(epoch_loss) or not all(np.isfinite(p).all() for p in params.values()):
            raise DivergenceError(epoch, epoch_loss)
        losses.append(epoch_loss)
    return model, losses


def predict_scores(model, rasters, batch=64):
    """Probability of ``intersection`` for each raster."""
    out = []
    rasters = list(rasters)
    for start in range(0, len(rasters), batch):
        chunk = rasters[start:start + batch]
        xs = []
        for r in chunk:
            if r.channels != model.channels:
                raise ShapeError(f"raster has {r.channels} channels, model expects {model.channels}")
            xs.append(prepare(r.pixels, model.input_size))
        probs, _ = forward(model.params, np.stack(xs))
        out.extend(float(v) for v in probs[:, model.classes.index(INTERSECTION)])
    return out


def predict(model, raster, threshold=DEFAULT_THRESHOLD):
    return Prediction.from_score(predict_scores(model, [raster])[0], threshold)


def gradient_check(model, sample, epsilon=1e-4, n_params=100, seed=0):
    """Max relative error between backprop and central differences.

    Checks ``n_params`` parameter entries drawn at random across all arrays,
    evaluated on float64 copies of the weights.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ConfigError("epsilon must lie in [1e-6, 1e-3]")
    params = {k: v.astype(np.float64) for k, v in model.params.items()}
    x = _stack([sample], model.input_size, model.channels)
    y = _targets([sample])
    _, grads = loss_and_grads(params, x, y)
    rng = np.random.default_rng(seed)
    sizes = np.array([params[k].size for k in PARAM_ORDER])
    flat_idx = rng.choice(sizes.sum(), size=min(n_params, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for g in np.sort(flat_idx):
        a = int(np.searchsorted(offsets, g, side="right")) - 1
        name = PARAM_ORDER[a]
        i = np.unravel_index(int(g - offsets[a]), params[name].shape)
        orig = params[name][i]
        params[name][i] = orig + epsilon
        lp = mean_loss(params, x, y)
        params[name][i] = orig - epsilon
        lm = mean_loss(params, x, y)
        params[name][i] = orig
        numeric = (lp - lm) / (2 * epsilon)
        analytic = grads[name][i]
        denom = max(abs(numeric), abs(analytic), GRADCHECK_FLOOR)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
