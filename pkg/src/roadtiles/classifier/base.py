"""Prediction record shared by both classifiers."""

from __future__ import annotations

from dataclasses import dataclass

from .. import INTERSECTION, STRAIGHT

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class Prediction:
    label: str
    score: float  # probability of intersection

    @classmethod
    def from_score(cls, score, threshold=DEFAULT_THRESHOLD):
        return cls(INTERSECTION if score >= threshold else STRAIGHT, float(score))
