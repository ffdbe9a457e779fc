"""Six image corruptions with integer severities, and a severity sweep driver.

Severity ``s`` of ``S`` sets the corruption strength to ``s / S`` of its
range.  Severity 0 returns the input unchanged, bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.color import hsv2rgb, rgb2hsv

KINDS = ("rotation", "hue_shift", "motion_blur", "gaussian_noise", "brightness", "occlusion")
MAX_SEVERITY = 5

# strength at full severity
RANGES = {
    "rotation": 180.0,          # degrees
    "hue_shift": 0.5,           # fraction of the hue circle
    "motion_blur": 15,          # kernel length in pixels (1 at severity 0)
    "gaussian_noise": 0.3,      # sigma
    "brightness": 0.5,          # +- offset
    "occlusion": 0.6,           # side of the masked square, fraction of the image side
}


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    severity: int
    max_severity: int = MAX_SEVERITY

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation {self.kind!r}; expected one of {KINDS}")
        if self.max_severity < 1:
            raise ValueError("max_severity must be at least 1")
        if int(self.severity) != self.severity or not 0 <= self.severity <= self.max_severity:
            raise ValueError(f"severity {self.severity} outside 0..{self.max_severity}")

    @property
    def fraction(self) -> float:
        return self.severity / self.max_severity

    @property
    def strength(self) -> float:
        if self.kind == "motion_blur":
            return 1 + round((RANGES["motion_blur"] - 1) * self.fraction)
        return RANGES[self.kind] * self.fraction


def apply_augmentation(images, spec: AugmentationSpec, seed=None) -> np.ndarray:
    """Corrupt one image (H, W, K) or a stack (..., H, W, K) of them.

    Random choices (noise, brightness sign, occluder position) are drawn per
    image from ``seed``; rotation angle, hue shift and blur length are fixed
    by the severity.
    """
    images = np.asarray(images)
    if images.ndim < 3:
        raise ValueError("expected images shaped (..., H, W, K)")
    if spec.severity == 0:
        return images.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = images.astype(np.float64)
    lead = x.shape[:-3]
    h, w = x.shape[-3:-1]
    strength = spec.strength

    if spec.kind == "rotation":
        out = ndimage.rotate(x, strength, axes=(x.ndim - 3, x.ndim - 2), reshape=False,
                             order=1, mode="nearest")
    elif spec.kind == "hue_shift":
        if x.shape[-1] != 3:
            raise ValueError("hue shift needs RGB images")
        hsv = rgb2hsv(np.clip(x, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + strength) % 1.0
        out = hsv2rgb(hsv)
    elif spec.kind == "motion_blur":
        out = ndimage.uniform_filter1d(x, size=int(strength), axis=x.ndim - 2, mode="nearest")
    elif spec.kind == "gaussian_noise":
        out = x + rng.normal(0.0, strength, size=x.shape)
    elif spec.kind == "brightness":
        sign = rng.choice([-1.0, 1.0], size=lead + (1, 1, 1))
        out = x + sign * strength
    else:  # occlusion
        side = int(round(strength * min(h, w)))
        top = rng.integers(0, h - side + 1, size=lead + (1, 1))
        left = rng.integers(0, w - side + 1, size=lead + (1, 1))
        rows = np.arange(h)[:, None]
        cols = np.arange(w)[None, :]
        mask = (rows >= top) & (rows < top + side) & (cols >= left) & (cols < left + side)
        out = np.where(mask[..., None], 0.5, x)
    return np.clip(out, 0.0, 1.0).astype(images.dtype, copy=False)


def augment_sequences(pixels, height, width, channels, spec, seed, chunk=4096) -> np.ndarray:
    """Apply ``spec`` to every frame of flattened sequence pixels (N, T, H*W*K).

    Frames are corrupted ``chunk`` at a time, drawing from one generator in
    order, which bounds the float64 working set of the colour conversions.
    """
    n, T, _ = pixels.shape
    images = pixels.reshape(n * T, height, width, channels)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.empty_like(images)
    for start in range(0, len(images), chunk):
        out[start:start + chunk] = apply_augmentation(images[start:start + chunk], spec, rng)
    return out.reshape(n, T, -1)


@dataclass
class SweepCell:
    kind: str
    severity: int
    reports: dict


def severity_sweep(evaluate, seq_ds, kinds=KINDS, severities=range(MAX_SEVERITY + 1),
                   seed=0, max_severity=MAX_SEVERITY) -> list[SweepCell]:
    """Evaluate every (kind, severity) cell.

    ``evaluate`` maps sequence pixels (N, T, D) to a dict of reports keyed by
    strategy.  Severity 0 evaluates the untouched pixels once and shares the
    result across kinds.
    """
    severities = [int(s) for s in severities]
    if severities != sorted(severities) or 0 not in severities:
        raise ValueError("severities must be sorted ascending and include 0")
    baseline = evaluate(seq_ds.pixels)
    cells = []
    for kind in kinds:
        for severity in severities:
            if severity == 0:
                reports = baseline
            else:
                spec = AugmentationSpec(kind, severity, max_severity)
                rng = np.random.default_rng([seed, KINDS.index(kind), severity])
                pixels = augment_sequences(seq_ds.pixels, seq_ds.height, seq_ds.width,
                                           seq_ds.channels, spec, rng)
                reports = evaluate(pixels)
            cells.append(SweepCell(kind, severity, reports))
    return cells
