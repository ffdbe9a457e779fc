"""Temporal and ensemble fusion of per-frame class distributions.

Strategies, for M members and a sequence of T frames:

* ``sm``: one model on every frame, averaged over time.
* ``de``: every member on every frame, averaged over members and time (M*T passes).
* ``desot``: member ``schedule[t]`` on frame t only, averaged over time (T passes).
* ``mcdropout``: one stochastic dropout pass per frame, averaged over time.

All fusion happens in probability space. Batched ``*_probs`` functions take
frames shaped (N, T, D) and return (N, C); the per-sequence ``predict_*``
wrappers call them with N = 1.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_dist, check_positive_int
from .nn import MlpModel, dropout_masks, forward, softmax


@dataclass
class SequenceSample:
    frames: np.ndarray
    label: int
    group_id: int = 0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2 or len(self.frames) < 1:
            raise ValueError("frames must be a non-empty (T, D) array")

    @property
    def T(self) -> int:
        return len(self.frames)


@dataclass
class CostCounter:
    """Counts forward passes, overall and per ensemble member."""

    n_members: int = 1
    forward_passes: int = 0
    per_member_passes: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.per_member_passes:
            self.per_member_passes = [0] * self.n_members
        self.n_members = len(self.per_member_passes)

    def add(self, member: int, n: int) -> None:
        if member >= self.n_members:
            self.per_member_passes.extend([0] * (member + 1 - self.n_members))
            self.n_members = member + 1
        self.per_member_passes[member] += int(n)
        self.forward_passes += int(n)

    def merge(self, other: "CostCounter") -> "CostCounter":
        merged = CostCounter(max(self.n_members, other.n_members))
        for counter in (self, other):
            for m, n in enumerate(counter.per_member_passes):
                merged.add(m, n)
        return merged


@dataclass(frozen=True)
class MemberSchedule:
    """Member index (1-based) used at each time step."""

    assignment: tuple[int, ...]
    n_members: int

    def __post_init__(self):
        if any(not 1 <= m <= self.n_members for m in self.assignment):
            raise ValueError("schedule entries must lie in 1..M")

    def __len__(self):
        return len(self.assignment)

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=np.int64) - 1

    def usage_counts(self) -> np.ndarray:
        return np.bincount(self.zero_based(), minlength=self.n_members)


def round_robin_schedule(T: int, M: int, offset: int = 0) -> MemberSchedule:
    T = check_positive_int(T, "T")
    M = check_positive_int(M, "M")
    if not 0 <= offset < M:
        raise ValueError(f"offset must be in [0, {M}), got {offset}")
    return MemberSchedule(tuple((t + offset) % M + 1 for t in range(T)), M)


def fuse_time(frame_dists) -> np.ndarray:
    """Class-wise mean over the first axis of a (T, ..., C) stack."""
    if len(frame_dists) == 0:
        raise ValueError("need at least one distribution")
    try:
        stacked = np.asarray(frame_dists, dtype=np.float64)
    except ValueError as exc:
        raise ValueError("distributions have mismatched lengths") from exc
    stacked = check_dist(stacked)
    return stacked.mean(axis=0)


def fuse_ensemble(member_dists) -> np.ndarray:
    """Mean over ensemble members; same arithmetic as :func:`fuse_time`."""
    return fuse_time(member_dists)


# -- batched strategies ------------------------------------------------------

def _as_frames(frames) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3 or frames.shape[1] < 1:
        raise ValueError("frames must be shaped (N, T, D)")
    return frames


def frame_probs(model: MlpModel, frames, temperature=1.0, mode="eval_deterministic", masks=None):
    """Per-frame class distributions for an (N, T, D) block -> (N, T, C)."""
    n, t, d = frames.shape
    logits, _ = forward(model, frames.reshape(n * t, d), mode, masks=masks)
    return softmax(logits / temperature).reshape(n, t, -1)


def _charge(counter, member, n):
    if counter is not None:
        counter.add(member, n)


def sm_probs(model, frames, counter=None, temperature=1.0):
    frames = _as_frames(frames)
    _charge(counter, 0, frames.shape[0] * frames.shape[1])
    return frame_probs(model, frames, temperature).mean(axis=1)


def de_probs(models, frames, counter=None, temperature=1.0):
    if len(models) == 0:
        raise ValueError("empty model list")
    _check_same_classes(models)
    frames = _as_frames(frames)
    per_member = []
    for m, model in enumerate(models):
        _charge(counter, m, frames.shape[0] * frames.shape[1])
        per_member.append(frame_probs(model, frames, temperature).mean(axis=1))
    return np.mean(per_member, axis=0)


def desot_probs(models, frames, schedule: MemberSchedule | None = None, counter=None, temperature=1.0):
    if len(models) == 0:
        raise ValueError("empty model list")
    _check_same_classes(models)
    frames = _as_frames(frames)
    n, T, _ = frames.shape
    if schedule is None:
        schedule = round_robin_schedule(T, len(models))
    if len(schedule) != T:
        raise ValueError(f"schedule covers {len(schedule)} steps but sequences have {T}")
    if schedule.n_members != len(models):
        raise ValueError(f"schedule is for {schedule.n_members} members, got {len(models)} models")
    assignment = schedule.zero_based()
    per_frame = np.empty((n, T, models[0].n_classes))
    for m, model in enumerate(models):
        steps = np.flatnonzero(assignment == m)
        if steps.size == 0:
            continue
        _charge(counter, m, n * steps.size)
        per_frame[:, steps] = frame_probs(model, frames[:, steps], temperature)
    return per_frame.mean(axis=1)


def mc_dropout_masks(model: MlpModel, rng_keys, T: int) -> list[np.ndarray]:
    """Masks for (sequence i, frame t), each drawn from a generator keyed by (*key_i, t).

    A key is an int or a tuple of ints.
    """
    rows = [dropout_masks(model, 1, np.random.default_rng([*np.atleast_1d(key).tolist(), t]))
            for key in rng_keys for t in range(T)]
    return [np.concatenate(layer) for layer in zip(*rows)]


def mc_dropout_probs(model, frames, rng_seeds, counter=None, temperature=1.0, masks=None):
    """``rng_seeds`` holds one key per sequence (an int or a tuple of ints).

    ``masks`` may carry the output of ``mc_dropout_masks`` for the same keys,
    so repeated passes over corrupted copies of one set skip regenerating them.
    """
    frames = _as_frames(frames)
    n, T, _ = frames.shape
    if len(rng_seeds) != n:
        raise ValueError(f"need one dropout key per sequence, got {len(rng_seeds)} for {n}")
    if model.dropout_rate == 0:
        warnings.warn("MC-dropout with dropout_rate=0 is a plain single model", stacklevel=2)
        return sm_probs(model, frames, counter, temperature)
    _charge(counter, 0, n * T)
    if masks is None:
        masks = mc_dropout_masks(model, rng_seeds, T)
    return frame_probs(model, frames, temperature, "eval_with_dropout", masks).mean(axis=1)


def _check_same_classes(models):
    if len({m.n_classes for m in models}) != 1:
        raise ValueError("all members must share the same number of classes")


# -- per-sequence API ---------------------------------------------------------

def _seq_frames(seq):
    return seq.frames if isinstance(seq, SequenceSample) else np.asarray(seq)


def predict_sm(model, seq, counter=None, temperature=1.0) -> np.ndarray:
    return sm_probs(model, _seq_frames(seq)[None], counter, temperature)[0]


def predict_de(models, seq, counter=None, temperature=1.0) -> np.ndarray:
    return de_probs(models, _seq_frames(seq)[None], counter, temperature)[0]


def predict_desot(models, seq, schedule=None, counter=None, temperature=1.0) -> np.ndarray:
    return desot_probs(models, _seq_frames(seq)[None], schedule, counter, temperature)[0]


def predict_mc_dropout(model, seq, rng_seed, counter=None, temperature=1.0) -> np.ndarray:
    return mc_dropout_probs(model, _seq_frames(seq)[None], [rng_seed], counter, temperature)[0]


# -- streaming ----------------------------------------------------------------

def streaming_fuse(window: deque, new_dist) -> np.ndarray:
    """Push ``new_dist`` into ``window`` and return the mean of what it holds.

    The window's ``maxlen`` is the moving-average length; ``None`` keeps
    every frame seen so far.
    """
    window.append(check_dist(np.asarray(new_dist, dtype=np.float64)))
    return np.mean(window, axis=0)


class StreamingFuser:
    """Moving average over the last ``window`` frame distributions."""

    def __init__(self, window: int | None = None):
        if window is not None:
            check_positive_int(window, "window")
        self.window = window
        self._buffer = deque(maxlen=window)

    def update(self, dist) -> np.ndarray:
        return streaming_fuse(self._buffer, dist)

    def reset(self) -> None:
        self._buffer.clear()
