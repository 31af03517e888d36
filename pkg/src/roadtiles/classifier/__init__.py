"""Tile classifiers: a geometric baseline and a small trainable CNN."""

from .base import DEFAULT_THRESHOLD, Prediction
from .cnn import Model, TrainConfig, gradient_check, init_model, predict, predict_scores, train_model
from .heuristic import UnclassifiableError, classify_heuristic
from .modelio import dumps, load_model, loads, save_model
