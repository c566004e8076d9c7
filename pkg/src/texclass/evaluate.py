"""Confusion matrix, overall accuracy and Cohen's kappa."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .raster import LabelMask, Rect


class MetricError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """``counts[r, p]``: pixels of reference class r+1 predicted as p+1."""

    counts: np.ndarray
    # reference-labelled, non-excluded pixels left unclassified (prediction 0)
    unclassified: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(self.counts < 0):
            raise ValueError("negative counts")

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def coverage(self) -> float:
        n = self.total + self.unclassified
        return self.total / n if n else 0.0


def confusion(predicted: LabelMask, reference: LabelMask, exclude: Iterable[Rect] = (),
              num_classes: int | None = None) -> ConfusionMatrix:
    if predicted.labels.shape != reference.labels.shape:
        raise MetricError(f"mask sizes differ: {predicted.labels.shape} vs "
                          f"{reference.labels.shape}")
    pred = predicted.labels.astype(np.int64)
    ref = reference.labels.astype(np.int64)
    keep = ref > 0
    for r in exclude:
        keep[r.slices()] = False
    k = num_classes or max(int(ref.max()), int(pred.max()), 1)
    scored = keep & (pred > 0)
    counts = np.bincount((ref[scored] - 1) * k + (pred[scored] - 1), minlength=k * k)
    return ConfusionMatrix(counts.reshape(k, k), int((keep & (pred == 0)).sum()))


def _require_total(m: ConfusionMatrix) -> float:
    if m.total <= 0:
        raise MetricError("confusion matrix is empty")
    return float(m.total)


def overall_accuracy(m: ConfusionMatrix) -> float:
    return float(np.trace(m.counts)) / _require_total(m)


def kappa(m: ConfusionMatrix) -> float:
    n = _require_total(m)
    po = float(np.trace(m.counts)) / n
    pe = float((m.counts.sum(axis=1) * m.counts.sum(axis=0)).sum()) / (n * n)
    if pe >= 1.0:
        raise MetricError("kappa undefined: chance agreement is 1")
    return (po - pe) / (1.0 - pe)


def per_class_errors(m: ConfusionMatrix) -> list[tuple[float, float]]:
    """(omission, commission) error per class; NaN where the class is absent."""
    out = []
    rows, cols = m.counts.sum(axis=1), m.counts.sum(axis=0)
    for k in range(m.K):
        d = m.counts[k, k]
        om = 1 - d / rows[k] if rows[k] else float("nan")
        co = 1 - d / cols[k] if cols[k] else float("nan")
        out.append((float(om), float(co)))
    return out


def report_text(m: ConfusionMatrix) -> str:
    lines = ["confusion matrix (rows = reference, columns = predicted)"]
    width = max(6, len(str(int(m.counts.max(initial=0)))) + 1)
    lines.append(" " * 6 + "".join(f"{k + 1:>{width}}" for k in range(m.K)))
    for k in range(m.K):
        lines.append(f"{k + 1:>6}" + "".join(f"{v:>{width}}" for v in m.counts[k]))
    lines.append("class  omission  commission")
    for k, (om, co) in enumerate(per_class_errors(m)):
        lines.append(f"{k + 1:>5}  {om:8.4f}  {co:10.4f}")
    lines.append(f"overall_accuracy {overall_accuracy(m):.6f}")
    try:
        lines.append(f"kappa {kappa(m):.6f}")
    except MetricError:
        lines.append("kappa undefined")
    lines.append(f"coverage {m.coverage:.6f}")
    return "\n".join(lines) + "\n"


def report_csv(m: ConfusionMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["reference"] + [f"pred_{k + 1}" for k in range(m.K)]
               + ["omission", "commission"])
    for k, (om, co) in enumerate(per_class_errors(m)):
        w.writerow([k + 1] + m.counts[k].tolist() + [f"{om:.6f}", f"{co:.6f}"])
    w.writerow(["overall_accuracy", f"{overall_accuracy(m):.6f}"])
    try:
        w.writerow(["kappa", f"{kappa(m):.6f}"])
    except MetricError:
        w.writerow(["kappa", ""])
    w.writerow(["coverage", f"{m.coverage:.6f}"])
    return buf.getvalue()
