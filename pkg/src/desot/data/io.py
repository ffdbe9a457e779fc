"""Frame and sequence dataset containers and their binary file formats.

DSET layout (little-endian): b"DSET", version u32, n, H, W, K, C as u32,
C class names (u32 byte length + UTF-8), n labels as u16, then n*H*W*K pixels
as f32, sample-major with (H, W, K) row-major inside a sample.

DSEQ layout: b"DSEQ", version u32, n, H, W, K, C, T as u32, class names,
n labels as u16, n group ids as u32, n*T*H*W*K pixels as f32, then a
provenance JSON block (u32 byte length + UTF-8).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DSET_MAGIC = b"DSET"
DSEQ_MAGIC = b"DSEQ"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    pass


def frame_features(pixels) -> np.ndarray:
    """Model inputs: pixels shifted from [0, 1] to [-0.5, 0.5], as float64."""
    return np.asarray(pixels, dtype=np.float64) - 0.5


def _validate(pixels, labels, class_names):
    if labels.size and labels.max(initial=0) >= len(class_names):
        bad = int(np.flatnonzero(labels >= len(class_names))[0])
        raise DatasetFormatError(
            f"record {bad}: label {labels[bad]} >= number of classes {len(class_names)}"
        )
    if labels.size and labels.min(initial=0) < 0:
        bad = int(np.flatnonzero(labels < 0)[0])
        raise DatasetFormatError(f"record {bad}: negative label {labels[bad]}")
    if len(pixels) == 0:
        return
    flat = pixels.reshape(len(pixels), -1)
    bad_rows = np.flatnonzero(~np.all((flat >= 0) & (flat <= 1), axis=1))
    if bad_rows.size:
        raise DatasetFormatError(f"record {bad_rows[0]}: pixel value outside [0, 1]")


@dataclass
class FrameDataset:
    pixels: np.ndarray          # (n, H*W*K) float32
    labels: np.ndarray          # (n,) int64
    class_names: list[str]
    height: int
    width: int
    channels: int = 3

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if pixels.size != len(pixels) * self.frame_size:
            raise ValueError(f"pixels do not hold {self.frame_size} values per sample")
        self.pixels = pixels.reshape(len(pixels), self.frame_size)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = [str(c) for c in self.class_names]
        if len(self.labels) != len(self.pixels):
            raise ValueError("pixels and labels have different lengths")
        _validate(self.pixels, self.labels, self.class_names)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def frame_size(self) -> int:
        return self.height * self.width * self.channels

    def images(self) -> np.ndarray:
        return self.pixels.reshape(self.n, self.height, self.width, self.channels)

    def features(self) -> np.ndarray:
        return frame_features(self.pixels)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, idx) -> "FrameDataset":
        return FrameDataset(self.pixels[idx], self.labels[idx], self.class_names,
                            self.height, self.width, self.channels)


@dataclass
class SequenceDataset:
    pixels: np.ndarray          # (n, T, H*W*K) float32
    labels: np.ndarray
    group_ids: np.ndarray
    class_names: list[str]
    height: int
    width: int
    channels: int = 3
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3:
            raise ValueError("sequence pixels must be shaped (n, T, H*W*K)")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.group_ids = np.asarray(self.group_ids, dtype=np.int64)
        self.class_names = [str(c) for c in self.class_names]
        if self.pixels.shape[2] != self.height * self.width * self.channels:
            raise ValueError("frame size does not match height * width * channels")
        if not (len(self.pixels) == len(self.labels) == len(self.group_ids)):
            raise ValueError("pixels, labels and group ids must have equal length")
        if len(np.unique(self.group_ids)) != len(self.group_ids):
            raise ValueError("group ids must be unique")
        if self.T < 1:
            raise ValueError("sequences need at least one frame")
        _validate(self.pixels, self.labels, self.class_names)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def T(self) -> int:
        return self.pixels.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def features(self) -> np.ndarray:
        return frame_features(self.pixels)

    def subset(self, idx) -> "SequenceDataset":
        return SequenceDataset(self.pixels[idx], self.labels[idx], self.group_ids[idx],
                               self.class_names, self.height, self.width, self.channels,
                               dict(self.provenance))


# -- encoding -----------------------------------------------------------------

def _names_block(names):
    out = []
    for name in names:
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise DatasetFormatError("truncated file")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u32(self, count=1):
        values = struct.unpack(f"<{count}I", self.take(4 * count))
        return values if count > 1 else values[0]

    def array(self, dtype, count):
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype)

    def names(self, count):
        try:
            return [self.take(self.u32()).decode("utf-8") for _ in range(count)]
        except UnicodeDecodeError as exc:
            raise DatasetFormatError("class name is not valid UTF-8") from exc

    def finish(self):
        if self.pos != len(self.data):
            raise DatasetFormatError("trailing bytes after payload")


def _check_labels_fit(labels):
    if labels.size and labels.max() > np.iinfo(np.uint16).max:
        raise ValueError("labels do not fit in u16")


def dataset_to_bytes(ds: FrameDataset) -> bytes:
    _check_labels_fit(ds.labels)
    header = DSET_MAGIC + struct.pack("<6I", FORMAT_VERSION, ds.n, ds.height, ds.width,
                                      ds.channels, ds.n_classes)
    return b"".join([
        header,
        _names_block(ds.class_names),
        ds.labels.astype("<u2").tobytes(),
        ds.pixels.astype("<f4").tobytes(),
    ])


def _open(data: bytes, magic: bytes) -> _Reader:
    if data[:4] != magic:
        raise DatasetFormatError("bad magic")
    reader = _Reader(data)
    reader.pos = 4
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported format version {version}")
    return reader


def dataset_from_bytes(data: bytes) -> FrameDataset:
    reader = _open(data, DSET_MAGIC)
    n, h, w, k, c = reader.u32(5)
    names = reader.names(c)
    labels = reader.array("<u2", n).astype(np.int64)
    pixels = reader.array("<f4", n * h * w * k).astype(np.float32).reshape(n, h * w * k)
    reader.finish()
    return FrameDataset(pixels, labels, names, h, w, k)


def sequences_to_bytes(ds: SequenceDataset) -> bytes:
    _check_labels_fit(ds.labels)
    if ds.group_ids.size and (ds.group_ids.min() < 0 or ds.group_ids.max() > 0xFFFFFFFF):
        raise ValueError("group ids do not fit in u32")
    provenance = json.dumps(ds.provenance, sort_keys=True).encode("utf-8")
    header = DSEQ_MAGIC + struct.pack("<7I", FORMAT_VERSION, ds.n, ds.height, ds.width,
                                      ds.channels, ds.n_classes, ds.T)
    return b"".join([
        header,
        _names_block(ds.class_names),
        ds.labels.astype("<u2").tobytes(),
        ds.group_ids.astype("<u4").tobytes(),
        ds.pixels.astype("<f4").tobytes(),
        struct.pack("<I", len(provenance)),
        provenance,
    ])


def sequences_from_bytes(data: bytes) -> SequenceDataset:
    reader = _open(data, DSEQ_MAGIC)
    n, h, w, k, c, T = reader.u32(6)
    names = reader.names(c)
    labels = reader.array("<u2", n).astype(np.int64)
    group_ids = reader.array("<u4", n).astype(np.int64)
    pixels = reader.array("<f4", n * T * h * w * k).astype(np.float32).reshape(n, T, h * w * k)
    try:
        provenance = json.loads(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError("corrupt provenance block") from exc
    reader.finish()
    return SequenceDataset(pixels, labels, group_ids, names, h, w, k, provenance)


def save_dataset(ds: FrameDataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path) -> FrameDataset:
    return dataset_from_bytes(Path(path).read_bytes())


def save_sequences(ds: SequenceDataset, path) -> None:
    Path(path).write_bytes(sequences_to_bytes(ds))


def load_sequences(path) -> SequenceDataset:
    return sequences_from_bytes(Path(path).read_bytes())


# -- label-space operations ---------------------------------------------------

def filter_classes(ds: FrameDataset, min_count: int = 0, max_count: int | None = None,
                   counts=None):
    """Drop classes whose count lies outside [min_count, max_count].

    ``counts`` defaults to the dataset's own class counts; pass training-set
    counts to filter an evaluation split by training frequency.  Returns the
    filtered dataset with dense labels and a map old label -> new label.
    """
    if min_count < 0:
        raise ValueError("min_count must be non-negative")
    counts = ds.class_counts() if counts is None else np.asarray(counts)
    if len(counts) != ds.n_classes:
        raise ValueError("counts must have one entry per class")
    keep = counts >= min_count
    if max_count is not None:
        keep &= counts <= max_count
    kept = np.flatnonzero(keep)
    if kept.size == 0:
        raise ValueError("every class was filtered out")
    mapping = {int(old): new for new, old in enumerate(kept)}
    rows = np.flatnonzero(keep[ds.labels])
    lookup = np.full(ds.n_classes, -1, dtype=np.int64)
    lookup[kept] = np.arange(kept.size)
    out = FrameDataset(ds.pixels[rows], lookup[ds.labels[rows]],
                       [ds.class_names[i] for i in kept], ds.height, ds.width, ds.channels)
    return out, mapping


def holdout_ood_classes(ds: FrameDataset, class_names):
    """Move the named classes out of the label space into a separate OOD set."""
    unknown = [c for c in class_names if c not in ds.class_names]
    if unknown:
        raise ValueError(f"unknown class names: {unknown}")
    held = np.array([ds.class_names.index(c) for c in class_names], dtype=np.int64)
    is_ood = np.isin(ds.labels, held)
    kept = np.setdiff1d(np.arange(ds.n_classes), held)
    if kept.size == 0:
        raise ValueError("no in-distribution classes remain")
    lookup = np.full(ds.n_classes, -1, dtype=np.int64)
    lookup[kept] = np.arange(kept.size)
    in_dist = FrameDataset(ds.pixels[~is_ood], lookup[ds.labels[~is_ood]],
                           [ds.class_names[i] for i in kept], ds.height, ds.width, ds.channels)
    ood_lookup = np.full(ds.n_classes, -1, dtype=np.int64)
    ood_lookup[held] = np.arange(held.size)
    ood = FrameDataset(ds.pixels[is_ood], ood_lookup[ds.labels[is_ood]], list(class_names),
                       ds.height, ds.width, ds.channels)
    return in_dist, ood


def stratified_split(labels, fractions, seed):
    """Per-class seeded shuffle into consecutive parts; returns sorted index arrays."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError("split fractions must be non-negative and sum to 1")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    parts = [[] for _ in fractions]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        cuts = np.round(np.cumsum(fractions)[:-1] * len(idx)).astype(int)
        for part, chunk in zip(parts, np.split(idx, cuts)):
            part.append(chunk)
    return [np.sort(np.concatenate(p)) for p in parts]
