"""Synthetic sign-like glyph images and jittered frame sequences."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .io import FrameDataset, SequenceDataset

SUPERSAMPLE = 4

COLORS = {
    "red": (0.85, 0.12, 0.12),
    "blue": (0.12, 0.25, 0.85),
    "yellow": (0.92, 0.82, 0.10),
    "white": (0.95, 0.95, 0.95),
    "green": (0.10, 0.65, 0.25),
    "orange": (0.95, 0.50, 0.05),
}


def _circle(u, v):
    return u * u + v * v <= 1.0


def _ring(u, v):
    r2 = u * u + v * v
    return (r2 <= 1.0) & (r2 >= 0.45)


def _square(u, v):
    return (np.abs(u) <= 0.85) & (np.abs(v) <= 0.85)


def _diamond(u, v):
    return np.abs(u) + np.abs(v) <= 1.0


def _triangle(u, v):
    # apex up; image rows grow downward, so v < 0 is up
    return (v >= -1.0) & (v <= 0.7) & (np.abs(u) <= 0.55 * (v + 1.0))


def _triangle_down(u, v):
    return _triangle(u, -v)


def _cross(u, v):
    arm = 0.32
    return ((np.abs(u) <= arm) & (np.abs(v) <= 1.0)) | ((np.abs(v) <= arm) & (np.abs(u) <= 1.0))


def _half_disc(u, v):
    return (u * u + v * v <= 1.0) & (v >= -0.1)


def _hbar(u, v):
    return (np.abs(u) <= 1.0) & (np.abs(v) <= 0.35)


def _vbar(u, v):
    return _hbar(v, u)


SHAPES = {
    "circle": _circle,
    "ring": _ring,
    "square": _square,
    "diamond": _diamond,
    "triangle": _triangle,
    "triangle_down": _triangle_down,
    "cross": _cross,
    "half_disc": _half_disc,
    "hbar": _hbar,
    "vbar": _vbar,
}


def glyph_classes(n_classes: int) -> list[tuple[str, str]]:
    """(shape, color) pairs: every shape in three colors, then the next three colors."""
    colors = list(COLORS)
    pairs = [pair for k in range(0, len(colors), 3)
             for pair in itertools.product(SHAPES, colors[k:k + 3])]
    if n_classes > len(pairs):
        raise ValueError(f"at most {len(pairs)} glyph classes are available")
    return pairs[:n_classes]


def long_tail_counts(n_classes, max_per_class, tail_exponent, min_per_class=1):
    ranks = np.arange(1, n_classes + 1, dtype=np.float64)
    counts = np.floor(max_per_class * ranks ** -tail_exponent).astype(np.int64)
    return np.maximum(counts, min_per_class)


@dataclass
class GlyphStyle:
    """Per-sample variation of the rendered glyphs."""

    size: int = 16
    scale_range: tuple[float, float] = (0.55, 0.85)
    max_offset: float = 0.18
    max_rotation: float = 20.0
    color_jitter: float = 0.08
    background_noise: float = 0.08
    contrast_range: tuple[float, float] = (0.85, 1.0)


def render_glyphs(shape_fn, color, n, rng, style: GlyphStyle) -> np.ndarray:
    """Render ``n`` anti-aliased glyphs on noisy backgrounds -> (n, H, W, 3)."""
    s = style.size
    fine = s * SUPERSAMPLE
    coords = (np.arange(fine) + 0.5) / fine * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    scale = rng.uniform(*style.scale_range, size=(n, 1, 1))
    off = rng.uniform(-style.max_offset, style.max_offset, size=(n, 2, 1, 1))
    theta = np.deg2rad(rng.uniform(-style.max_rotation, style.max_rotation, size=(n, 1, 1)))
    x0, y0 = xx[None] - off[:, 0], yy[None] - off[:, 1]
    u = (np.cos(theta) * x0 + np.sin(theta) * y0) / scale
    v = (-np.sin(theta) * x0 + np.cos(theta) * y0) / scale
    inside = shape_fn(u, v).astype(np.float64)
    alpha = inside.reshape(n, s, SUPERSAMPLE, s, SUPERSAMPLE).mean(axis=(2, 4))[..., None]

    background = rng.uniform(0.15, 0.75, size=(n, 1, 1, 3))
    background = background + rng.normal(0.0, style.background_noise, size=(n, s, s, 3))
    fg = np.asarray(color) + rng.uniform(-style.color_jitter, style.color_jitter, size=(n, 1, 1, 3))
    contrast = rng.uniform(*style.contrast_range, size=(n, 1, 1, 1))
    fg = contrast * fg + (1.0 - contrast) * background
    img = alpha * fg + (1.0 - alpha) * background
    img = img + rng.normal(0.0, style.background_noise / 2, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def parse_class_name(name: str) -> tuple[str, str]:
    """"red_triangle_down" -> ("triangle_down", "red")."""
    color, _, shape = name.partition("_")
    if color not in COLORS or shape not in SHAPES:
        raise ValueError(f"unknown glyph class {name!r}; expected <color>_<shape> with color in "
                         f"{list(COLORS)} and shape in {list(SHAPES)}")
    return shape, color


def generate_glyph_dataset(n_classes=23, tail_exponent=0.8, seed=0, max_per_class=4000,
                           min_per_class=20, style: GlyphStyle | None = None,
                           class_names=None) -> FrameDataset:
    """Long-tailed labelled glyph frames; class 0 is the most frequent.

    ``class_names`` ("<color>_<shape>", most frequent first) overrides the
    built-in catalog; ``n_classes`` must then match its length.
    """
    style = style or GlyphStyle()
    rng = np.random.default_rng(seed)
    if class_names is None:
        classes = glyph_classes(n_classes)
    else:
        if len(class_names) != n_classes or len(set(class_names)) != n_classes:
            raise ValueError("class_names must hold n_classes distinct names")
        classes = [parse_class_name(name) for name in class_names]
    counts = long_tail_counts(n_classes, max_per_class, tail_exponent, min_per_class)
    images, labels = [], []
    for label, ((shape, color), count) in enumerate(zip(classes, counts)):
        images.append(render_glyphs(SHAPES[shape], COLORS[color], int(count), rng, style))
        labels.append(np.full(count, label))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = rng.permutation(len(labels))
    names = [f"{color}_{shape}" for shape, color in classes]
    return FrameDataset(images[order].reshape(len(labels), -1), labels[order], names,
                        style.size, style.size, 3)


@dataclass
class Jitter:
    """Per-frame perturbation of a sequence's earlier frames."""

    translate: float = 0.10     # fraction of width, uniform +-
    scale: float = 0.10         # relative, uniform +-
    noise: float = 0.02         # additive Gaussian sigma

    def __post_init__(self):
        if min(self.translate, self.scale, self.noise) < 0:
            raise ValueError("jitter parameters must be non-negative")


def jitter_frame(image, rng, jitter: Jitter) -> np.ndarray:
    h, w, _ = image.shape
    dx, dy = rng.uniform(-1.0, 1.0, size=2) * jitter.translate * np.array([w, h])
    s = 1.0 + rng.uniform(-1.0, 1.0) * jitter.scale
    out = image
    if dx or dy or s != 1.0:
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        matrix = np.diag([1.0 / s, 1.0 / s, 1.0])
        offset = np.array([cy - cy / s - dy / s, cx - cx / s - dx / s, 0.0])
        out = ndimage.affine_transform(image, matrix, offset=offset, order=1, mode="nearest")
    if jitter.noise:
        out = out + rng.normal(0.0, jitter.noise, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def synthesize_sequences(ds: FrameDataset, T: int = 11, jitter: Jitter | None = None, seed: int = 0,
                         group_id_offset: int = 0) -> SequenceDataset:
    """Turn every frame into a T-frame sequence ending in the unperturbed frame.

    Frame t of sample i is perturbed with a generator seeded by (seed, i, t),
    so the result is a pure function of the inputs.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    jitter = jitter or Jitter()
    images = ds.images().astype(np.float64)
    n = ds.n
    out = np.empty((n, T, ds.frame_size), dtype=np.float32)
    for i in range(n):
        for t in range(T - 1):
            rng = np.random.default_rng([seed, i, t])
            out[i, t] = jitter_frame(images[i], rng, jitter).reshape(-1)
        out[i, T - 1] = ds.pixels[i]
    provenance = {"seed": seed, "T": T, "jitter": asdict(jitter), "group_id_offset": group_id_offset}
    return SequenceDataset(out, ds.labels.copy(), np.arange(n) + group_id_offset, ds.class_names,
                           ds.height, ds.width, ds.channels, provenance)
