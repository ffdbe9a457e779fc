"""Scoring: accuracy, macro-F1, ECE, binned Brier decomposition, entropy.

Predictions are passed as a probability matrix (N, C) plus integer labels.
Argmax ties resolve to the lowest class index.  Entropies are in nats.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from ._validation import check_dist, check_positive_int, check_probs_labels

ECE_BINS = 15
BRIER_BINS = 10


def accuracy(probs, labels) -> float:
    probs, labels = check_probs_labels(probs, labels)
    return float(np.mean(probs.argmax(axis=1) == labels))


def f1_per_class(pred, labels, classes):
    scores = []
    for c in classes:
        tp = np.sum((pred == c) & (labels == c))
        fp = np.sum((pred == c) & (labels != c))
        fn = np.sum((pred != c) & (labels == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return np.asarray(scores, dtype=np.float64)


def macro_f1(probs, labels, n_classes=None, classes=None) -> float:
    """Unweighted mean of per-class F1.

    By default the mean runs over every class that occurs as a label or as a
    prediction.  Pass ``classes`` to average over a fixed subset instead.
    """
    probs, labels = check_probs_labels(probs, labels)
    if n_classes is not None and probs.shape[1] != n_classes:
        raise ValueError(f"expected {n_classes} classes, got {probs.shape[1]}")
    pred = probs.argmax(axis=1)
    if classes is None:
        classes = np.union1d(labels, pred)
    return float(f1_per_class(pred, labels, classes).mean())


def ece(probs, labels, n_bins=ECE_BINS) -> float:
    """Top-label ECE with equal-width bins (b/n, (b+1)/n]."""
    probs, labels = check_probs_labels(probs, labels)
    n_bins = check_positive_int(n_bins, "n_bins")
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    bins = np.clip(np.ceil(conf * n_bins).astype(np.int64) - 1, 0, n_bins - 1)
    total = 0.0
    for b in range(n_bins):
        in_bin = bins == b
        count = in_bin.sum()
        if count:
            total += count * abs(correct[in_bin].mean() - conf[in_bin].mean())
    return float(total / len(probs))


class BrierDecomposition(NamedTuple):
    score: float
    reliability: float
    resolution: float
    uncertainty: float


def brier(probs, labels, n_bins=BRIER_BINS) -> BrierDecomposition:
    """Multiclass Brier score with a per-class binned decomposition.

    Each class's forecast column is binned on [0, 1] into ``n_bins`` equal bins
    (1.0 lands in the last).  REL, RES and UNC are summed over classes, so
    ``REL - RES + UNC`` equals the score when every forecast sits on its bin's
    mean value.
    """
    probs, labels = check_probs_labels(probs, labels)
    n_bins = check_positive_int(n_bins, "n_bins")
    n, C = probs.shape
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    score = float(np.sum((probs - onehot) ** 2) / n)

    rel = res = unc = 0.0
    bins = np.minimum(np.floor(probs * n_bins).astype(np.int64), n_bins - 1)
    for c in range(C):
        base_rate = onehot[:, c].mean()
        unc += base_rate * (1.0 - base_rate)
        counts = np.bincount(bins[:, c], minlength=n_bins)
        sum_f = np.bincount(bins[:, c], weights=probs[:, c], minlength=n_bins)
        sum_o = np.bincount(bins[:, c], weights=onehot[:, c], minlength=n_bins)
        used = counts > 0
        mean_f = sum_f[used] / counts[used]
        mean_o = sum_o[used] / counts[used]
        rel += float(np.sum(counts[used] * (mean_f - mean_o) ** 2) / n)
        res += float(np.sum(counts[used] * (mean_o - base_rate) ** 2) / n)
    return BrierDecomposition(score, rel, res, float(unc))


def entropy(probs) -> np.ndarray | float:
    """Shannon entropy in nats along the last axis; 0 * log 0 is taken as 0."""
    p = check_dist(probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    h = np.maximum(-terms.sum(axis=-1), 0.0)
    return float(h) if h.ndim == 0 else h


def entropy_histogram(entropies, n_bins=20, value_range=None, n_classes=None):
    """Counts of entropies in equal-width bins plus their mean.

    The default range is [0, ln C]; values are clipped into the range so the
    counts always add up to the number of inputs.
    """
    h = np.asarray(entropies, dtype=np.float64)
    if h.size == 0:
        raise ValueError("empty input")
    n_bins = check_positive_int(n_bins, "n_bins")
    if value_range is None:
        if n_classes is None:
            raise ValueError("give value_range or n_classes")
        value_range = (0.0, math.log(n_classes))
    lo, hi = value_range
    counts, edges = np.histogram(np.clip(h, lo, hi), bins=n_bins, range=(lo, hi))
    return counts, edges, float(h.mean())


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    ece: float
    brier_score: float
    brier_reliability: float
    mean_entropy: float
    forward_passes: int
    n_samples: int

    FIELDS = ("accuracy", "macro_f1", "ece", "brier_score", "brier_reliability",
              "mean_entropy", "forward_passes", "n_samples")

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(probs, labels, forward_passes=0, ece_bins=ECE_BINS, brier_bins=BRIER_BINS,
             f1_classes=None) -> EvalReport:
    probs, labels = check_probs_labels(probs, labels)
    decomposition = brier(probs, labels, brier_bins)
    return EvalReport(
        accuracy=accuracy(probs, labels),
        macro_f1=macro_f1(probs, labels, classes=f1_classes),
        ece=ece(probs, labels, ece_bins),
        brier_score=decomposition.score,
        brier_reliability=decomposition.reliability,
        mean_entropy=float(np.mean(entropy(probs))),
        forward_passes=int(forward_passes),
        n_samples=len(labels),
    )
