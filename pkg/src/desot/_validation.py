"""Input validation helpers shared by the functional API and the estimators."""
from __future__ import annotations

import numpy as np

DIST_ATOL = 1e-9


def check_finite(x, name="input"):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_dist(p, name="distribution", atol=DIST_ATOL):
    """Validate categorical distribution(s) along the last axis."""
    p = check_finite(p, name)
    if p.ndim == 0 or p.shape[-1] == 0:
        raise ValueError(f"{name} must have at least one class")
    if np.any(p < -atol) or np.any(p > 1 + atol):
        raise ValueError(f"{name} has entries outside [0, 1]")
    if not np.allclose(p.sum(axis=-1), 1.0, rtol=0.0, atol=atol):
        raise ValueError(f"{name} does not sum to 1")
    return p


def check_labels(labels, n_classes, name="labels"):
    labels = np.asarray(labels)
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValueError(f"{name} must be integer class indices")
    labels = labels.astype(np.int64)
    bad = np.flatnonzero((labels < 0) | (labels >= n_classes))
    if bad.size:
        raise ValueError(
            f"{name}[{bad[0]}] = {labels[bad[0]]} out of range for {n_classes} classes"
        )
    return labels


def check_probs_labels(probs, labels):
    probs = check_dist(np.atleast_2d(probs), "probs")
    if probs.ndim != 2:
        raise ValueError("probs must be 2-D (n_samples, n_classes)")
    if len(probs) == 0:
        raise ValueError("empty input")
    labels = check_labels(np.atleast_1d(labels), probs.shape[1])
    if labels.shape != (len(probs),):
        raise ValueError(f"got {len(probs)} predictions but {labels.shape} labels")
    return probs, labels


def check_positive_int(value, name, minimum=1):
    if int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
