"""Temperature scaling fitted by validation NLL.

``single`` mode scores one model's logits, shape (N, C).  ``joint_ensemble``
mode treats an ensemble as one model with one temperature: logits are shaped
(M, N, C), member softmaxes are averaged, and the NLL is taken on the average.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._validation import check_finite, check_labels
from .nn import log_softmax, softmax

LOG = logging.getLogger(__name__)

SEARCH_BOUNDS = (0.05, 20.0)
LOG_TOL = 1e-4
MODES = ("single", "joint_ensemble")


@dataclass(frozen=True)
class Temperature:
    value: float
    nll: float | None = None
    nll_at_one: float | None = None
    bounds: tuple[float, float] = SEARCH_BOUNDS
    clamped: bool = False

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ValueError(f"temperature must be positive and finite, got {self.value}")

    def __float__(self):
        return float(self.value)


def apply_temperature(logits, temp) -> np.ndarray:
    temp = float(temp)
    if not temp > 0:
        raise ValueError("temperature must be positive")
    return softmax(check_finite(logits, "logits") / temp)


def _member_logits(logit_sets, mode):
    z = check_finite(logit_sets, "logits")
    if mode == "single":
        if z.ndim != 2:
            raise ValueError("single mode expects logits shaped (N, C)")
        return z[None]
    if mode == "joint_ensemble":
        if z.ndim != 3:
            raise ValueError("joint_ensemble mode expects logits shaped (M, N, C)")
        return z
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def validation_nll(logit_sets, labels, temp, mode="single") -> float:
    z = _member_logits(logit_sets, mode)
    if z.shape[1] == 0:
        raise ValueError("empty validation set")
    labels = check_labels(labels, z.shape[2])
    if labels.shape != (z.shape[1],):
        raise ValueError("need one label per validation sample")
    return _nll(z, labels, float(temp))


def _nll(z, labels, temp):
    # log of the member-averaged probability, kept in log space
    logp = log_softmax(z / temp)
    log_mean = logsumexp(logp, axis=0) - math.log(len(z))
    return float(-log_mean[np.arange(len(labels)), labels].mean())


def fit_temperature(logit_sets, labels, mode="single", bounds=SEARCH_BOUNDS, tol=LOG_TOL) -> Temperature:
    """Golden-section search for the NLL-optimal temperature on log scale.

    The result is never worse than T = 1 on the fitting data, and snaps to a
    bound when the bound itself scores best.
    """
    z = _member_logits(logit_sets, mode)
    if z.shape[1] == 0:
        raise ValueError("empty validation set")
    labels = check_labels(labels, z.shape[2])

    def objective(log_t):
        value = _nll(z, labels, math.exp(log_t))
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite NLL at temperature {math.exp(log_t):g}")
        return value

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    best = (fc, c) if fc <= fd else (fd, d)

    baseline = objective(0.0)
    candidates = [best, (objective(lo), lo), (objective(hi), hi), (baseline, 0.0)]
    nll, log_t = min(candidates, key=lambda item: item[0])
    clamped = log_t in (lo, hi)
    if clamped:
        LOG.warning("temperature clamped to search bound %.3g", math.exp(log_t))
    return Temperature(math.exp(log_t), nll, baseline, tuple(bounds), clamped)
