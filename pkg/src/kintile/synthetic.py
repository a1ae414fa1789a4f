"""Deterministic synthetic images for benchmarks and tests.

Two flavours of horizontal-brightness-gradient image:

* :func:`gradient_image` ramps brightness with a mild uniform sinusoidal
  texture. Used for the statistics-distance analysis; the texture matters
  because on a textureless ramp the first layer's per-patch statistics
  vectors all point along one direction, degenerating cosine similarity.

* :func:`seam_benchmark_image` additionally fades the texture amplitude
  from left to right, so per-patch contrast varies the way tissue fades
  into blank background on a slide. Patch-wise normalization divides the
  low-contrast patches by tiny sigmas and amplifies their residual ripple
  into arbitrary content, producing strong seams that neighbourhood-
  averaged statistics avoid; this is the standard input for the seam
  comparisons.

Both are seamless by construction, so any seams in a translated copy come
from per-patch normalization.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "gradient_image",
    "seam_benchmark_image",
    "two_tone_image",
    "tiled_duplicate_image",
]


def gradient_image(
    height: int,
    width: int,
    lo: float = -0.75,
    hi: float = 0.75,
    texture: float = 0.12,
    cycles: float = 3.0,
) -> np.ndarray:
    """Horizontal brightness ramp with smooth texture, CHW float32 in [-1, 1]."""
    xs = np.linspace(lo, hi, width, dtype=np.float32)
    ys = np.linspace(0.0, 2.0 * np.pi * cycles, height, dtype=np.float32)
    xph = np.linspace(0.0, 2.0 * np.pi * cycles, width, dtype=np.float32)
    ramp = np.broadcast_to(xs, (height, width))
    tex = 0.5 * texture * (np.sin(ys)[:, None] + np.cos(xph)[None, :])
    chan_scale = np.array([1.0, 0.9, 0.8], dtype=np.float32)
    chan_shift = np.array([0.0, 0.05, -0.05], dtype=np.float32)
    img = ramp[None, :, :] * chan_scale[:, None, None] + tex[None, :, :]
    img = img + chan_shift[:, None, None]
    return np.clip(img, -1.0, 1.0).astype(np.float32)


def seam_benchmark_image(
    height: int,
    width: int,
    ramp: float = 0.5,
    tex_hi: float = 0.35,
    tex_lo: float = 0.004,
) -> np.ndarray:
    """Brightness ramp with left-to-right fading texture, CHW in [-1, 1]."""
    xs = np.arange(width, dtype=np.float32)
    ys = np.arange(height, dtype=np.float32)
    base = ramp * (2.0 * xs / (width - 1) - 1.0)
    amp = tex_lo + (tex_hi - tex_lo) * (1.0 - xs / (width - 1)) ** 2
    tex = np.sin(2 * np.pi * ys / 11.0)[:, None] * np.cos(2 * np.pi * xs / 13.0)[None, :]
    tex = tex + 0.6 * np.sin(2 * np.pi * (ys[:, None] + xs[None, :]) / 17.0)
    img = base[None, :] + amp[None, :] * tex
    out = np.stack([img, 0.9 * img + 0.03, 0.8 * img - 0.03])
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def two_tone_image(height: int, width: int, split_x: int, left=0.0, right=1.0) -> np.ndarray:
    """Constant left/right halves glued at column ``split_x`` (HW float32)."""
    img = np.full((height, width), left, dtype=np.float32)
    img[:, split_x:] = right
    return img


def tiled_duplicate_image(patch: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Tile one CHW patch into a (rows x cols)-patch image."""
    return np.tile(patch, (1, rows, cols)).astype(np.float32)
