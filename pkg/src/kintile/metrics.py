"""Evaluation metrics that need no pretrained networks.

Histogram correlation, Sobel gradients in YCbCr, and SSIM follow the usual
8-bit conventions (values on the [0, 255] scale, HW or HWC layout).

seam_discrepancy is this artifact's own score for tiling artifacts: the
mean absolute pixel difference across internal patch boundaries, minus the
same statistic along the parallel lines one pixel away. The control term
subtracts the image's natural texture so a seamless image scores about
zero while hue/contrast jumps at patch borders score positive.

stats_similarity reproduces the statistics-distance analysis: per-layer
channel means/stds are probed for every patch and cosine similarities are
recorded against the spatial distance between the patch pair.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .generator import Generator
from .pipeline import TileGrid, _as_chw, _patch_view, _prepared_image
from .tensor import Tensor

__all__ = [
    "MetricReport",
    "StatSimilarityRecord",
    "histogram_correlation",
    "sobel_gradient_ycbcr",
    "ssim",
    "seam_discrepancy",
    "stats_similarity",
]

SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


@dataclass(frozen=True)
class MetricReport:
    name: str
    value: float
    params: dict
    images: Tuple[str, ...] = ()


@dataclass(frozen=True)
class StatSimilarityRecord:
    layer_id: int
    coord_a: Tuple[int, int]
    coord_b: Tuple[int, int]
    distance_px: float
    mu_cos: float
    sigma_cos: float
    mu_l2: float
    sigma_l2: float


def _channels_last(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected an HW or HWC image, got shape {arr.shape}")
    return arr


def histogram_correlation(a, b, bins: int = 256) -> float:
    """Pearson correlation of the two images' concatenated channel histograms.

    Histograms use ``bins`` equal bins over [0, 256) per channel and are
    normalized to unit mass before concatenation. Identical histograms give
    1.0; a degenerate (zero-variance) histogram vector is defined as 0.0.
    """
    ia, ib = _channels_last(a), _channels_last(b)
    if ia.shape[2] != ib.shape[2]:
        raise ValueError("images must have the same channel count")

    def hist_vec(img):
        parts = []
        for c in range(img.shape[2]):
            h, _ = np.histogram(img[:, :, c], bins=bins, range=(0.0, 256.0))
            parts.append(h.astype(np.float64) / max(h.sum(), 1))
        return np.concatenate(parts)

    ha, hb = hist_vec(ia), hist_vec(ib)
    da, db = ha - ha.mean(), hb - hb.mean()
    na, nb = np.sqrt((da * da).sum()), np.sqrt((db * db).sum())
    if na == 0.0 or nb == 0.0:
        warnings.warn("degenerate histogram (zero variance); correlation defined as 0")
        return 0.0
    return float((da * db).sum() / (na * nb))


def _rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    # ITU-R BT.601 full-range conversion
    r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=2)


def sobel_gradient_ycbcr(img) -> float:
    """Mean Sobel gradient magnitude over the YCbCr channels of an RGB image."""
    arr = _channels_last(img)
    if arr.shape[2] != 3:
        raise ValueError("sobel_gradient_ycbcr expects an RGB image")
    ycc = _rgb_to_ycbcr(arr)
    total = 0.0
    for c in range(3):
        gx = ndimage.convolve(ycc[:, :, c], _SOBEL_X, mode="reflect")
        gy = ndimage.convolve(ycc[:, :, c], _SOBEL_X.T, mode="reflect")
        total += float(np.sqrt(gx * gx + gy * gy).mean())
    return total / 3.0


def _window_means(x: np.ndarray, w: int) -> np.ndarray:
    """Means of every w-by-w sliding window via a float64 integral image."""
    ii = np.zeros((x.shape[0] + 1, x.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(x, axis=0), axis=1, out=ii[1:, 1:])
    s = ii[w:, w:] - ii[:-w, w:] - ii[w:, :-w] + ii[:-w, :-w]
    return s / (w * w)


def _ssim_single(a: np.ndarray, b: np.ndarray, window: int, c1: float, c2: float) -> float:
    mx = _window_means(a, window)
    my = _window_means(b, window)
    mxx = _window_means(a * a, window)
    myy = _window_means(b * b, window)
    mxy = _window_means(a * b, window)
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    num = (2.0 * mx * my + c1) * (2.0 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def ssim(a, b, window: int = 8, c1: float = SSIM_C1, c2: float = SSIM_C2) -> float:
    """Mean local SSIM over all sliding windows (population window stats).

    Inputs are on the 8-bit scale; multichannel images average the
    per-channel scores. 1.0 iff the images are identical.
    """
    ia, ib = _channels_last(a), _channels_last(b)
    if ia.shape != ib.shape:
        raise ValueError(f"image dims differ: {ia.shape} vs {ib.shape}")
    if ia.shape[0] < window or ia.shape[1] < window:
        raise ValueError(f"images smaller than the {window}x{window} window")
    scores = [
        _ssim_single(ia[:, :, c], ib[:, :, c], window, c1, c2) for c in range(ia.shape[2])
    ]
    return float(np.mean(scores))


def seam_discrepancy(img, grid: TileGrid) -> float:
    """Control-normalized cross-boundary difference along patch borders.

    About zero for seamless images, positive when patch borders carry
    hue/contrast jumps. Single-patch grids score 0 by definition.
    """
    arr = _channels_last(img)
    h, w = arr.shape[0], arr.shape[1]
    p = grid.patch
    if grid.rows * grid.cols <= 1:
        return 0.0
    seam_diffs: list = []
    ctrl_diffs: list = []
    for j in range(1, grid.cols):
        x = j * p
        if x - 2 < 0 or x + 1 > w - 1:
            continue
        seam_diffs.append(np.abs(arr[:, x - 1] - arr[:, x]).ravel())
        ctrl_diffs.append(np.abs(arr[:, x - 2] - arr[:, x - 1]).ravel())
        ctrl_diffs.append(np.abs(arr[:, x] - arr[:, x + 1]).ravel())
    for i in range(1, grid.rows):
        y = i * p
        if y - 2 < 0 or y + 1 > h - 1:
            continue
        seam_diffs.append(np.abs(arr[y - 1, :] - arr[y, :]).ravel())
        ctrl_diffs.append(np.abs(arr[y - 2, :] - arr[y - 1, :]).ravel())
        ctrl_diffs.append(np.abs(arr[y, :] - arr[y + 1, :]).ravel())
    if not seam_diffs:
        return 0.0
    return float(np.concatenate(seam_diffs).mean() - np.concatenate(ctrl_diffs).mean())


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    a64, b64 = a.astype(np.float64), b.astype(np.float64)
    na, nb = np.linalg.norm(a64), np.linalg.norm(b64)
    if na < 1e-12 or nb < 1e-12:
        return 1.0 if (na < 1e-12 and nb < 1e-12) else 0.0
    return float(np.dot(a64, b64) / (na * nb))


def stats_similarity(
    gen: Generator,
    image,
    grid: TileGrid,
    layers: Optional[Sequence[int]] = None,
    max_distance_px: float = 5000.0,
    max_pairs: int = 5000,
    seed: int = 0,
) -> List[StatSimilarityRecord]:
    """Cosine similarity of per-layer patch statistics against distance.

    Probes every patch once, then records mu/sigma cosine similarities and
    Euclidean stat distances for coordinate pairs (self-pairs included)
    whose spatial distance is at most ``max_distance_px``. Pairs beyond
    ``max_pairs`` are subsampled deterministically.
    """
    img = _as_chw(image)
    prepared = _prepared_image(img, grid)
    probes = {}
    for coord in grid.coords():
        x = Tensor(_patch_view(prepared, grid, *coord)[None])
        probes[coord] = gen.stat_probe(x, coord)
    layer_ids = list(layers) if layers is not None else list(range(len(gen.norm_states)))

    coords = list(grid.coords())
    pairs = []
    p = grid.patch
    for a_idx in range(len(coords)):
        for b_idx in range(a_idx, len(coords)):
            ca, cb = coords[a_idx], coords[b_idx]
            d = p * float(np.hypot(ca[0] - cb[0], ca[1] - cb[1]))
            if d <= max_distance_px:
                pairs.append((ca, cb, d))
    if len(pairs) > max_pairs:
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[k] for k in sorted(keep)]

    records: List[StatSimilarityRecord] = []
    for ca, cb, d in pairs:
        pa, pb = probes[ca], probes[cb]
        for lid in layer_ids:
            _, mu_a, sig_a = pa[lid]
            _, mu_b, sig_b = pb[lid]
            records.append(
                StatSimilarityRecord(
                    layer_id=lid,
                    coord_a=ca,
                    coord_b=cb,
                    distance_px=d,
                    mu_cos=_cosine(mu_a, mu_b),
                    sigma_cos=_cosine(sig_a, sig_b),
                    mu_l2=float(np.linalg.norm(mu_a.astype(np.float64) - mu_b)),
                    sigma_l2=float(np.linalg.norm(sig_a.astype(np.float64) - sig_b)),
                )
            )
    return records
