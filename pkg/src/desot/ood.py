"""Entropy-threshold OOD detection with a fit/eval split over sequences.

A record is flagged OOD when its entropy is strictly greater than the
threshold.  OOD is the positive class for precision, recall and F1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

LOG = logging.getLogger(__name__)


class SplitRoleError(ValueError):
    """Raised when a fit split is used for reporting or vice versa."""


@dataclass
class OodSplit:
    entropies: np.ndarray
    is_ood: np.ndarray
    group_ids: np.ndarray
    role: str = "all"

    def __post_init__(self):
        self.entropies = np.asarray(self.entropies, dtype=np.float64)
        self.is_ood = np.asarray(self.is_ood, dtype=bool)
        self.group_ids = np.asarray(self.group_ids, dtype=np.int64)
        if not (self.entropies.shape == self.is_ood.shape == self.group_ids.shape):
            raise ValueError("entropies, is_ood and group_ids must align")
        if self.entropies.ndim != 1:
            raise ValueError("records must be one-dimensional arrays")
        if np.any(self.entropies < 0) or not np.all(np.isfinite(self.entropies)):
            raise ValueError("entropies must be finite and non-negative")
        if self.role not in ("all", "fit", "eval"):
            raise ValueError(f"unknown split role {self.role!r}")

    def __len__(self):
        return len(self.entropies)

    def subset(self, idx, role) -> "OodSplit":
        return OodSplit(self.entropies[idx], self.is_ood[idx], self.group_ids[idx], role)


@dataclass
class ThresholdFit:
    threshold: float
    f1: float
    degenerate: bool


@dataclass
class OodReport:
    threshold: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    n_samples: int
    flags: list[str] = field(default_factory=list)


def split_halves(records: OodSplit, seed: int):
    """Stratified 50/50 split by seeded shuffle of group ids.

    In-distribution and OOD records are shuffled separately, so both halves
    see both kinds.  The fit half gets the floor of each half-count.
    """
    if len(records) < 2:
        raise ValueError("need at least two records to split")
    rng = np.random.default_rng(seed)
    fit_idx, eval_idx = [], []
    for flag in (False, True):
        idx = np.flatnonzero(records.is_ood == flag)
        if len(idx) < 2:
            kind = "OOD" if flag else "in-distribution"
            raise ValueError(f"degenerate split: fewer than two {kind} records")
        idx = idx[np.argsort(records.group_ids[idx], kind="stable")]
        idx = idx[rng.permutation(len(idx))]
        half = len(idx) // 2
        fit_idx.append(idx[:half])
        eval_idx.append(idx[half:])
    fit = records.subset(np.sort(np.concatenate(fit_idx)), "fit")
    evaluation = records.subset(np.sort(np.concatenate(eval_idx)), "eval")
    return fit, evaluation


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def candidate_thresholds(entropies) -> np.ndarray:
    """Midpoints between sorted distinct values, plus one just below the
    minimum (flag everything) and the maximum itself (flag nothing)."""
    u = np.unique(np.asarray(entropies, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.concatenate([[np.nextafter(u[0], -np.inf)], mids, [u[-1]]])


def fit_threshold(fit_split: OodSplit) -> ThresholdFit:
    """Threshold maximizing detection F1 on the fit split; ties go to the smaller value."""
    if fit_split.role == "eval":
        raise SplitRoleError("threshold must not be fitted on the evaluation split")
    h, ood = fit_split.entropies, fit_split.is_ood
    if len(h) == 0 or ood.all() or not ood.any():
        raise ValueError("degenerate input: need both in-distribution and OOD records")
    candidates = candidate_thresholds(h)
    order = np.argsort(h, kind="stable")
    h_sorted, ood_sorted = h[order], ood[order]
    ood_below = np.concatenate([[0], np.cumsum(ood_sorted)])
    # records with entropy <= tau are not flagged
    n_below = np.searchsorted(h_sorted, candidates, side="right")
    n_pos = int(ood.sum())
    fn = ood_below[n_below]
    tp = n_pos - fn
    fp = (len(h) - n_below) - tp
    f1 = _f1(tp, fp, fn)
    best = int(np.argmax(f1))  # first maximum = smallest threshold
    flagged = len(h) - n_below[best]
    degenerate = flagged in (0, len(h))
    if degenerate:
        LOG.warning("OOD threshold cannot separate the fit split (flags %d of %d)", flagged, len(h))
    return ThresholdFit(float(candidates[best]), float(f1[best]), bool(degenerate))


def confusion(is_ood, flagged):
    is_ood = np.asarray(is_ood, dtype=bool)
    flagged = np.asarray(flagged, dtype=bool)
    tp = int(np.sum(flagged & is_ood))
    fp = int(np.sum(flagged & ~is_ood))
    fn = int(np.sum(~flagged & is_ood))
    tn = int(np.sum(~flagged & ~is_ood))
    return tp, fp, fn, tn


def evaluate_detection(eval_split: OodSplit, threshold: float) -> OodReport:
    if eval_split.role == "fit":
        raise SplitRoleError("detection metrics must be computed on the evaluation split")
    if len(eval_split) == 0:
        raise ValueError("empty evaluation split")
    tp, fp, fn, tn = confusion(eval_split.is_ood, eval_split.entropies > threshold)
    flags = []
    if tp + fp == 0:
        flags.append("precision_undefined")
    if tp + fn == 0:
        flags.append("recall_undefined")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = float(_f1(tp, fp, fn))
    return OodReport(
        threshold=float(threshold),
        accuracy=(tp + tn) / len(eval_split),
        precision=precision,
        recall=recall,
        f1=f1,
        n_samples=len(eval_split),
        flags=flags,
    )


def detect(records: OodSplit, seed: int):
    """Split, fit on one half, report on the other."""
    fit, evaluation = split_halves(records, seed)
    fitted = fit_threshold(fit)
    report = evaluate_detection(evaluation, fitted.threshold)
    if fitted.degenerate:
        report.flags.append("degenerate_threshold")
    return report
