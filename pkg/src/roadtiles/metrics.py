"""Confusion matrices and per-class / aggregate classification metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import CLASSES
from .errors import DomainError

# Published speed-colored results, used as a cross-check reference.
REFERENCE_SPEED_TABLE = {
    "classes": {
        "intersection": {"precision": 0.98, "recall": 0.84, "f1": 0.90, "support": 67},
        "straight": {"precision": 0.94, "recall": 0.99, "f1": 0.97, "support": 170},
    },
    "accuracy": 0.95,
    "macro_avg": {"precision": 0.96, "recall": 0.91, "f1": 0.93},
    "weighted_avg": {"precision": 0.95, "recall": 0.95, "f1": 0.93},
    "total": 237,
}
REFERENCE_SPEED_CONFUSION = ((56, 11), (1, 169))

# Published grayscale results (split sizing only; not an integer-consistent table).
REFERENCE_GRAYSCALE_TABLE = {
    "classes": {
        "intersection": {"precision": 0.73, "recall": 0.69, "f1": 0.71, "support": 55},
        "straight": {"precision": 0.90, "recall": 0.92, "f1": 0.91, "support": 166},
    },
    "accuracy": 0.86,
    "macro_avg": {"precision": 0.82, "recall": 0.80, "f1": 0.81},
    "weighted_avg": {"precision": 0.86, "recall": 0.86, "f1": 0.86},
    "total": 221,
}


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [actual][predicted], class order CLASSES
    classes: tuple = CLASSES

    @property
    def total(self):
        return int(self.counts.sum())

    def tolist(self):
        return self.counts.tolist()


@dataclass
class EvalReport:
    classes: dict
    accuracy: float
    macro_avg: dict
    weighted_avg: dict
    total: int
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            "classes": self.classes,
            "accuracy": self.accuracy,
            "macro_avg": self.macro_avg,
            "weighted_avg": self.weighted_avg,
            "total": self.total,
            "flags": list(self.flags),
        }

    def rounded(self, digits=2):
        def r(d):
            return {k: (round(v, digits) if isinstance(v, float) else v) for k, v in d.items()}
        return {
            "classes": {c: r(m) for c, m in self.classes.items()},
            "accuracy": round(self.accuracy, digits),
            "macro_avg": r(self.macro_avg),
            "weighted_avg": r(self.weighted_avg),
            "total": self.total,
        }


def confusion(pairs, classes=CLASSES):
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    index = {c: i for i, c in enumerate(classes)}
    for actual, predicted in pairs:
        try:
            counts[index[actual], index[predicted]] += 1
        except KeyError as exc:
            raise DomainError(f"unknown label {exc.args[0]!r}") from None
    return ConfusionMatrix(counts, tuple(classes))


def _ratio(num, den, flags, name):
    if den == 0:
        flags.append(f"{name}: 0/0 reported as 0")
        return 0.0
    return num / den


def report(cm, reference=None):
    """Per-class precision/recall/F1, accuracy, macro and weighted averages.

    Values are full precision. With ``reference`` (a table shaped like
    ``REFERENCE_SPEED_TABLE``), any figure that differs from the reference
    after 2-decimal rounding is recorded in ``flags``.
    """
    counts = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=np.int64)
    classes = cm.classes if isinstance(cm, ConfusionMatrix) else CLASSES
    total = int(counts.sum())
    if total == 0:
        raise DomainError("cannot report on an empty confusion matrix")
    flags = []
    per = {}
    for i, c in enumerate(classes):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp
        fn = int(counts[i, :].sum()) - tp
        p = _ratio(tp, tp + fp, flags, f"{c}.precision")
        r = _ratio(tp, tp + fn, flags, f"{c}.recall")
        f1 = _ratio(2 * p * r, p + r, flags, f"{c}.f1")
        per[c] = {"precision": p, "recall": r, "f1": f1, "support": int(counts[i, :].sum())}
    keys = ("precision", "recall", "f1")
    macro = {k: float(np.mean([per[c][k] for c in classes])) for k in keys}
    weighted = {k: sum(per[c][k] * per[c]["support"] for c in classes) / total for k in keys}
    rep = EvalReport(per, float(np.trace(counts)) / total, macro, weighted, total, flags)
    if reference is not None:
        rep.flags.extend(compare(rep, reference))
    return rep


def compare(rep, reference, digits=2):
    """Describe every reference figure the computed report does not reproduce."""
    notes = []

    def check(name, value, ref):
        if round(value, digits) != round(ref, digits):
            notes.append(f"{name}: computed {value:.{digits}f} ({value:.4f}), reference prints {ref:.{digits}f}")

    for c, m in reference.get("classes", {}).items():
        for k in ("precision", "recall", "f1"):
            check(f"{c}.{k}", rep.classes[c][k], m[k])
        if rep.classes[c]["support"] != m["support"]:
            notes.append(f"{c}.support: computed {rep.classes[c]['support']}, reference {m['support']}")
    check("accuracy", rep.accuracy, reference["accuracy"])
    for agg in ("macro_avg", "weighted_avg"):
        for k in ("precision", "recall", "f1"):
            check(f"{agg}.{k}", getattr(rep, agg)[k], reference[agg][k])
    return notes


def write_report(rep, cm, path):
    doc = rep.to_dict()
    doc["confusion"] = {"classes": list(cm.classes), "counts": cm.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_confusion_csv(cm, path):
    """Long-form plot data: actual, predicted, count."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actual", "predicted", "count"])
        for i, a in enumerate(cm.classes):
            for j, p in enumerate(cm.classes):
                w.writerow([a, p, int(cm.counts[i, j])])


def format_table(rep):
    """Plain-text classification table in the usual report layout."""
    lines = [f"{'':14s}{'precision':>10s}{'recall':>10s}{'f1-score':>10s}{'support':>10s}"]
    for c, m in rep.classes.items():
        lines.append(f"{c:14s}{m['precision']:10.2f}{m['recall']:10.2f}{m['f1']:10.2f}{m['support']:10d}")
    lines.append(f"{'accuracy':14s}{'':10s}{'':10s}{rep.accuracy:10.2f}{rep.total:10d}")
    for name, agg in (("macro avg", rep.macro_avg), ("weighted avg", rep.weighted_avg)):
        lines.append(f"{name:14s}{agg['precision']:10.2f}{agg['recall']:10.2f}{agg['f1']:10.2f}{rep.total:10d}")
    return "\n".join(lines)
