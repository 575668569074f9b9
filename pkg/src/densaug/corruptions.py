"""Five graded image corruptions for robustness experiments.

Severity runs in [0, 1]; severity 0 is a bytewise identity for every kind.
The severity parameterizations are calibrated to be visibly graded:

    gaussian_noise  per-channel N(0, (50*severity)^2), clamped
    occlusion       random rectangle covering severity*25% of the area,
                    filled with mid-gray 128
    resolution      box-downsample by 1 + round(3*severity), then
                    nearest-neighbor upsample
    fog             alpha-blend toward white; per-pixel alpha is a seeded
                    smooth noise field scaled by severity
    motion_blur     horizontal box blur of length 1 + round(14*severity),
                    edges replicated

Each kind consumes its random draws in a fixed documented order, so helpers
like :func:`occlusion_rect` can replay the geometry from an equally seeded
generator.
"""

from __future__ import annotations

import numpy as np

from .augment import Image
from .core import ValidationError

__all__ = ["CORRUPTION_KINDS", "corrupt", "occlusion_rect"]

CORRUPTION_KINDS = ("gaussian_noise", "occlusion", "resolution", "fog", "motion_blur")


def occlusion_rect(
    width: int, height: int, severity: float, rng: np.random.Generator
) -> tuple[int, int, int, int]:
    """The rectangle (x0, y0, w, h) that occlusion at this severity fills.

    Draw order: x0 then y0 (the extent is deterministic in the severity).
    """
    frac = 0.25 * severity
    rect_w = min(width, max(1, int(round(width * np.sqrt(frac)))))
    rect_h = min(height, max(1, int(round(height * np.sqrt(frac)))))
    x0 = int(rng.integers(0, width - rect_w + 1))
    y0 = int(rng.integers(0, height - rect_h + 1))
    return x0, y0, rect_w, rect_h


def _gaussian_noise(px: np.ndarray, severity: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.normal(0.0, 50.0 * severity, size=px.shape)
    return np.clip(np.rint(px.astype(np.float64) + noise), 0, 255).astype(np.uint8)


def _occlude(px: np.ndarray, severity: float, rng: np.random.Generator) -> np.ndarray:
    h, w = px.shape[:2]
    x0, y0, rect_w, rect_h = occlusion_rect(w, h, severity, rng)
    out = px.copy()
    out[y0 : y0 + rect_h, x0 : x0 + rect_w] = 128
    return out

def _resolution(px: np.ndarray, severity: float) -> np.ndarray:
    factor = 1 + int(round(3.0 * severity))
    if factor == 1:
        return px.copy()
    h, w = px.shape[:2]
    row_edges = np.arange(0, h, factor)
    col_edges = np.arange(0, w, factor)
    sums = np.add.reduceat(np.add.reduceat(px.astype(np.float64), row_edges, axis=0), col_edges, axis=1)
    row_counts = np.diff(np.append(row_edges, h))
    col_counts = np.diff(np.append(col_edges, w))
    means = sums / (row_counts[:, None] * col_counts[None, :])[..., None]
    blocks = np.clip(np.rint(means), 0, 255).astype(np.uint8)
    return np.repeat(np.repeat(blocks, row_counts, axis=0), col_counts, axis=1)


def _fog(px: np.ndarray, severity: float, rng: np.random.Generator) -> np.ndarray:
    h, w = px.shape[:2]
    base = rng.random((9, 9))  # low-res field, bilinearly upsampled
    lo, hi = base.min(), base.max()
    field = (base - lo) / (hi - lo) if hi > lo else np.ones_like(base)
    ys = np.linspace(0.0, field.shape[0] - 1.0, h)
    xs = np.linspace(0.0, field.shape[1] - 1.0, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, field.shape[0] - 1)
    x1 = np.minimum(x0 + 1, field.shape[1] - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    upsampled = (
        field[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + field[np.ix_(y0, x1)] * (1 - fy) * fx
        + field[np.ix_(y1, x0)] * fy * (1 - fx)
        + field[np.ix_(y1, x1)] * fy * fx
    )
    alpha = (severity * upsampled)[..., None]
    out = px.astype(np.float64) + alpha * (255.0 - px.astype(np.float64))
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _motion_blur(px: np.ndarray, severity: float) -> np.ndarray:
    length = 1 + int(round(14.0 * severity))
    if length == 1:
        return px.copy()
    left = (length - 1) // 2
    right = length // 2
    padded = np.pad(px.astype(np.float64), ((0, 0), (left, right), (0, 0)), mode="edge")
    csum = np.cumsum(padded, axis=1)
    csum = np.concatenate([np.zeros((px.shape[0], 1, 3)), csum], axis=1)
    window = (csum[:, length:] - csum[:, :-length]) / length
    return np.clip(np.rint(window), 0, 255).astype(np.uint8)


def corrupt(image: Image, kind: str, severity: float, rng: np.random.Generator) -> Image:
    """Apply one corruption kind at the given severity."""
    if kind not in CORRUPTION_KINDS:
        raise ValidationError(f"unknown corruption kind {kind!r}")
    if not (0.0 <= severity <= 1.0):
        raise ValidationError(f"severity must lie in [0, 1], got {severity}")
    if severity == 0.0:
        return Image(image.pixels)

    px = image.pixels
    if kind == "gaussian_noise":
        return Image(_gaussian_noise(px, severity, rng))
    if kind == "occlusion":
        return Image(_occlude(px, severity, rng))
    if kind == "resolution":
        return Image(_resolution(px, severity))
    if kind == "fog":
        return Image(_fog(px, severity, rng))
    return Image(_motion_blur(px, severity))
