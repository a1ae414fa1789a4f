"""Normalization strategies for tiled generator inference.

Four interchangeable ways to pick the (mu, sigma) used at every
normalization site of the generator:

* ``full-in``   - statistics of the whole image (the small-image oracle);
* ``patch-in``  - statistics of the current patch only (the baseline that
                  produces tiling artifacts);
* ``tin``       - statistics captured once from a thumbnail of the image;
* ``kin``       - statistics of the current patch's neighbourhood: each
                  patch's per-channel mean/std is cached in a spatial table
                  during a first pass, and at inference the table is
                  convolved with a kernel centred on the patch coordinate.

The caching tables are plain float32 grids indexed by patch coordinate.
Cells are write-once; the table is padded virtually with edge values when
the kernel footprint leaves the grid. Table reductions run in float64 with
a fixed row-major accumulation order so results are reproducible bit for
bit regardless of scheduling.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .tensor import Tensor, channel_stats, normalize_with_stats

__all__ = [
    "Phase",
    "KinKernel",
    "NormMode",
    "StatTable",
    "NormLayerState",
    "build_kernel",
    "cache_stats",
    "kin_stats",
    "apply_norm",
    "tin_capture",
    "save_stat_tables",
    "load_stat_tables",
]

DEFAULT_EPS = 1e-5


class Phase(Enum):
    CACHING = "caching"
    INFERENCE = "inference"


@dataclass(frozen=True)
class KinKernel:
    """Spatial weight matrix used to mix cached patch statistics.

    ``kind`` is "constant", "gaussian", or "global". Constant and Gaussian
    kernels are (size x size) matrices normalized to sum 1; "global" is a
    sentinel meaning a uniform average over every (unpadded) table cell.
    """

    kind: str
    size: int = 0
    sigma: float = 0.0
    weights: Optional[np.ndarray] = None

    def describe(self) -> str:
        if self.kind == "global":
            return "global"
        if self.kind == "gaussian":
            return f"gaussian{self.size}(sigma={self.sigma:g})"
        return f"{self.kind}{self.size}"


def build_kernel(kind: str, size: Optional[int] = None, sigma: Optional[float] = None) -> KinKernel:
    """Construct a statistics-mixing kernel.

    Constant kernels weight every neighbour 1/size^2; Gaussian kernels
    evaluate exp(-(du^2+dv^2)/(2 sigma^2)) on the integer offsets and
    normalize to sum 1 (sigma defaults to size/3). Size must be odd.
    """
    kind = kind.lower()
    if kind == "global":
        return KinKernel(kind="global")
    if kind not in ("constant", "gaussian"):
        raise ValueError(f"unknown kernel kind {kind!r}")
    if size is None or size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if kind == "constant":
        w = np.full((size, size), 1.0 / (size * size), dtype=np.float64)
        return KinKernel(kind=kind, size=size, weights=w)
    sg = float(sigma) if sigma is not None else size / 3.0
    if sg <= 0:
        raise ValueError(f"gaussian sigma must be > 0, got {sg}")
    offs = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(offs[:, None] ** 2 + offs[None, :] ** 2) / (2.0 * sg * sg))
    g /= g.sum()
    return KinKernel(kind=kind, size=size, sigma=sg, weights=g)


@dataclass(frozen=True)
class NormMode:
    """Which statistics every normalization site uses for a whole run."""

    kind: str
    kernel: Optional[KinKernel] = None

    _KINDS = ("full-in", "patch-in", "tin", "kin")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown mode {self.kind!r}; expected one of {self._KINDS}")
        if self.kind == "kin" and self.kernel is None:
            raise ValueError("kin mode requires a kernel")
        if self.kind != "kin" and self.kernel is not None:
            raise ValueError(f"mode {self.kind!r} takes no kernel")

    @classmethod
    def full_in(cls) -> "NormMode":
        return cls("full-in")

    @classmethod
    def patch_in(cls) -> "NormMode":
        return cls("patch-in")

    @classmethod
    def tin(cls) -> "NormMode":
        return cls("tin")

    @classmethod
    def kin(cls, kernel: KinKernel) -> "NormMode":
        return cls("kin", kernel)

    def describe(self) -> str:
        if self.kind == "kin":
            return f"kin/{self.kernel.describe()}"
        return self.kind


class StatTable:
    """Write-once grid of per-patch channel statistics (the caching tables).

    ``mu`` and ``sigma`` are (rows, cols, C) float32 arrays; ``filled``
    tracks which cells have been written. Writes are guarded by a lock so
    concurrent caching workers get a hard error on double writes instead of
    silent corruption.
    """

    def __init__(self, rows: int, cols: int, channels: int):
        if rows < 1 or cols < 1 or channels < 1:
            raise ValueError("table dims must be >= 1")
        self.rows = rows
        self.cols = cols
        self.channels = channels
        self.mu = np.zeros((rows, cols, channels), dtype=np.float32)
        self.sigma = np.zeros((rows, cols, channels), dtype=np.float32)
        self.filled = np.zeros((rows, cols), dtype=bool)
        self._lock = threading.Lock()

    @property
    def complete(self) -> bool:
        return bool(self.filled.all())

    def unfilled_cells(self):
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(~self.filled))]

    def write(self, i: int, j: int, mu: np.ndarray, sigma: np.ndarray) -> None:
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(
                f"cell ({i}, {j}) outside table of {self.rows}x{self.cols}"
            )
        with self._lock:
            if self.filled[i, j]:
                raise RuntimeError(f"cell ({i}, {j}) already cached; cells are write-once")
            self.mu[i, j] = mu
            self.sigma[i, j] = sigma
            self.filled[i, j] = True

    def nbytes(self) -> int:
        return self.mu.nbytes + self.sigma.nbytes + self.filled.nbytes


@dataclass
class NormLayerState:
    """Per-site normalization state: affine parameters plus per-run stats.

    ``table`` is present only for kin runs; ``thumbnail_mu``/``thumbnail_sigma``
    only for tin runs after the capture pass.
    """

    layer_id: int
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = DEFAULT_EPS
    table: Optional[StatTable] = None
    thumbnail_mu: Optional[np.ndarray] = None
    thumbnail_sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.gamma.shape != self.beta.shape or self.gamma.ndim != 1:
            raise ValueError(
                f"norm{self.layer_id}: gamma/beta must be matching vectors, "
                f"got {self.gamma.shape} and {self.beta.shape}"
            )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def cache_stats(state: NormLayerState, features: Tensor, coord) -> None:
    """Record the patch's channel statistics in the caching table cell."""
    if state.table is None:
        raise RuntimeError(
            f"norm{state.layer_id}: no caching table attached; kin runs must "
            "initialize tables before the caching phase"
        )
    if coord is None:
        raise ValueError("caching a patch requires its (i, j) coordinate")
    mu, sigma = channel_stats(features)
    state.table.write(int(coord[0]), int(coord[1]), mu[0], sigma[0])


def kin_stats(state: NormLayerState, coord, kernel: KinKernel):
    """Kernel-weighted neighbourhood statistics around a patch coordinate.

    Table indices outside the grid clamp to the border (edge-value padding).
    The weighted sum accumulates in float64 over kernel offsets in row-major
    order, then rounds once to float32. Global kernels average every cell.
    """
    table = state.table
    if table is None:
        raise RuntimeError(f"norm{state.layer_id}: kin inference requires a caching table")
    if not table.complete:
        missing = table.unfilled_cells()
        raise RuntimeError(
            f"norm{state.layer_id}: caching table incomplete; unfilled cells {missing[:8]}"
            + ("..." if len(missing) > 8 else "")
        )
    if kernel.kind == "global":
        mu = table.mu.mean(axis=(0, 1), dtype=np.float64)
        sigma = table.sigma.mean(axis=(0, 1), dtype=np.float64)
        return mu.astype(np.float32), sigma.astype(np.float32)
    i, j = int(coord[0]), int(coord[1])
    if not (0 <= i < table.rows and 0 <= j < table.cols):
        raise IndexError(f"coord ({i}, {j}) outside table of {table.rows}x{table.cols}")
    q = kernel.size // 2
    k64 = kernel.weights
    mu_acc = np.zeros(table.channels, dtype=np.float64)
    sig_acc = np.zeros(table.channels, dtype=np.float64)
    for u in range(-q, q + 1):
        ci = min(max(i + u, 0), table.rows - 1)
        for v in range(-q, q + 1):
            cj = min(max(j + v, 0), table.cols - 1)
            wgt = k64[q + u, q + v]
            mu_acc += wgt * table.mu[ci, cj].astype(np.float64)
            sig_acc += wgt * table.sigma[ci, cj].astype(np.float64)
    return mu_acc.astype(np.float32), sig_acc.astype(np.float32)


def tin_capture(state: NormLayerState, thumbnail_features: Tensor) -> None:
    """Store the thumbnail's channel statistics for all later patches."""
    mu, sigma = channel_stats(thumbnail_features)
    state.thumbnail_mu = mu[0].copy()
    state.thumbnail_sigma = sigma[0].copy()


def apply_norm(
    state: NormLayerState,
    features: Tensor,
    coord,
    mode: NormMode,
    phase: Phase = Phase.INFERENCE,
) -> Tensor:
    """Normalize a feature map according to the run's strategy and phase.

    full-in and patch-in always use the tensor's own statistics. tin uses
    its own statistics during the capture (caching) pass, storing them, and
    the stored thumbnail statistics at inference. kin caches the patch's own
    statistics during the caching pass (and normalizes with them, since the
    pass output is discarded), then normalizes with the kernel-convolved
    table statistics at inference.
    """
    g, b, eps = state.gamma, state.beta, state.eps
    if mode.kind in ("full-in", "patch-in"):
        mu, sigma = channel_stats(features)
        return normalize_with_stats(features, mu, sigma, g, b, eps)
    if mode.kind == "tin":
        if phase is Phase.CACHING:
            tin_capture(state, features)
            mu, sigma = state.thumbnail_mu, state.thumbnail_sigma
            return normalize_with_stats(features, mu, sigma, g, b, eps)
        if state.thumbnail_mu is None or state.thumbnail_sigma is None:
            raise RuntimeError(
                f"norm{state.layer_id}: tin inference requires a thumbnail "
                "capture phase before any patch is translated"
            )
        return normalize_with_stats(features, state.thumbnail_mu, state.thumbnail_sigma, g, b, eps)
    # kin
    if phase is Phase.CACHING:
        cache_stats(state, features, coord)
        i, j = int(coord[0]), int(coord[1])
        mu = state.table.mu[i, j]
        sigma = state.table.sigma[i, j]
        return normalize_with_stats(features, mu, sigma, g, b, eps)
    if coord is None:
        raise ValueError("kin inference requires the patch coordinate")
    mu, sigma = kin_stats(state, coord, mode.kernel)
    return normalize_with_stats(features, mu, sigma, g, b, eps)


def save_stat_tables(states, path) -> None:
    """Persist completed caching tables as a .urw sidecar.

    Entries are named ``layer{id}.mu`` / ``layer{id}.sigma`` with shape
    (rows, cols, C), so a caching pass can be run once and reused.
    """
    from .weights import write_container

    entries = {}
    for st in states:
        if st.table is None or not st.table.complete:
            raise RuntimeError(
                f"norm{st.layer_id}: cannot persist an incomplete caching table"
            )
        entries[f"layer{st.layer_id}.mu"] = st.table.mu
        entries[f"layer{st.layer_id}.sigma"] = st.table.sigma
    write_container(path, entries)


def load_stat_tables(states, path, rows: int, cols: int) -> None:
    """Attach persisted caching tables, validating grid dims and channels."""
    from .weights import read_container

    entries = read_container(path)
    for st in states:
        try:
            mu = entries.pop(f"layer{st.layer_id}.mu")
            sigma = entries.pop(f"layer{st.layer_id}.sigma")
        except KeyError as e:
            raise ValueError(f"table sidecar {path} is missing entry {e.args[0]!r}") from None
        want = (rows, cols, st.channels)
        if mu.shape != want or sigma.shape != want:
            raise ValueError(
                f"layer{st.layer_id}: sidecar tables have shape {mu.shape}, "
                f"expected {want} for this image grid"
            )
        table = StatTable(rows, cols, st.channels)
        table.mu[:] = mu
        table.sigma[:] = sigma
        table.filled[:] = True
        st.table = table
        st.thumbnail_mu = None
        st.thumbnail_sigma = None
    if entries:
        raise ValueError(f"table sidecar {path} has unexpected entries: {sorted(entries)[:5]}")
