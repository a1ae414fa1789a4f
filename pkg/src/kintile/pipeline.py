"""End-to-end tiled translation: tile, cache, infer, assemble.

The input image stays on the host (a plain numpy array, possibly a memmap);
only one patch per worker is ever staged as an engine tensor, which is what
keeps peak tensor memory independent of image size. A kin run makes two
passes over the patches: the caching pass fills every statistics table,
then a full barrier, then the inference pass reads them. tin replaces the
caching pass with a single thumbnail capture; patch-in needs no first pass;
full-in stages the entire image as one tensor and exists as a small-image
oracle behind a pixel budget.

BLAS pools are clamped to one thread for the duration of a run so outputs
are byte-identical regardless of the worker count or patch order;
parallelism comes from the patch-level worker pool.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .generator import Generator
from .normalize import NormMode, Phase, build_kernel, load_stat_tables, save_stat_tables
from .tensor import Tensor, bilinear_resize_array, meter

__all__ = [
    "TileGrid",
    "TranslationReport",
    "tile",
    "translate",
    "cache_pass",
    "infer_pass",
    "assemble",
    "DEFAULT_FULL_IN_PIXEL_BUDGET",
]

DEFAULT_FULL_IN_PIXEL_BUDGET = 2048 * 2048

POLICIES = ("pad-reflect", "strict-crop")

# The caching pass never reads kernel weights, but NormMode("kin") carries one.
_CACHE_KERNEL = build_kernel("constant", 1)


@dataclass(frozen=True)
class TileGrid:
    """Non-overlapping patch grid over an image.

    strict-crop keeps floor(M/P) x floor(N/P) patches and drops remainder
    pixels; pad-reflect covers ceil(M/P) x ceil(N/P) patches of a
    reflect-padded image whose output is cropped back to M x N.
    """

    image_h: int
    image_w: int
    patch: int
    rows: int
    cols: int
    policy: str

    @property
    def padded_h(self) -> int:
        return self.rows * self.patch

    @property
    def padded_w(self) -> int:
        return self.cols * self.patch

    @property
    def out_h(self) -> int:
        return self.image_h if self.policy == "pad-reflect" else self.padded_h

    @property
    def out_w(self) -> int:
        return self.image_w if self.policy == "pad-reflect" else self.padded_w

    def coords(self) -> Iterator[Tuple[int, int]]:
        for i in range(self.rows):
            for j in range(self.cols):
                yield (i, j)


def make_grid(image_h: int, image_w: int, patch: int, policy: str = "pad-reflect") -> TileGrid:
    if policy not in POLICIES:
        raise ValueError(f"unknown remainder policy {policy!r}; expected one of {POLICIES}")
    if image_h < 1 or image_w < 1:
        raise ValueError("image dims must be >= 1")
    if policy == "strict-crop":
        rows, cols = image_h // patch, image_w // patch
        if rows < 1 or cols < 1:
            raise ValueError(
                f"strict-crop needs at least one full {patch}x{patch} patch, "
                f"image is {image_h}x{image_w}"
            )
    else:
        rows = -(-image_h // patch)
        cols = -(-image_w // patch)
    return TileGrid(image_h, image_w, patch, rows, cols, policy)


def _as_chw(image) -> np.ndarray:
    arr = image.numpy() if isinstance(image, Tensor) else np.asarray(image, dtype=np.float32)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ValueError(f"expected batch of 1, got shape {arr.shape}")
        arr = arr[0]
    if arr.ndim != 3:
        raise ValueError(f"expected a (C, H, W) image, got shape {arr.shape}")
    return arr


def _reflect_pad_bottom_right(img: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    """Reflect-pad CHW on the bottom/right, iterating when pads exceed dims."""
    out = img
    while pad_h > 0 or pad_w > 0:
        ph = min(pad_h, out.shape[1] - 1)
        pw = min(pad_w, out.shape[2] - 1)
        if ph == 0 and pw == 0:
            raise ValueError("cannot reflect-pad an image with a unit dimension")
        out = np.pad(out, ((0, 0), (0, ph), (0, pw)), mode="reflect")
        pad_h -= ph
        pad_w -= pw
    return out


def _prepared_image(img: np.ndarray, grid: TileGrid) -> np.ndarray:
    """Host image covering the full grid (padded or virtually cropped)."""
    if grid.policy == "pad-reflect":
        return _reflect_pad_bottom_right(
            img, grid.padded_h - img.shape[1], grid.padded_w - img.shape[2]
        )
    return img[:, : grid.padded_h, : grid.padded_w]


def _patch_view(prepared: np.ndarray, grid: TileGrid, i: int, j: int) -> np.ndarray:
    p = grid.patch
    return prepared[:, i * p : (i + 1) * p, j * p : (j + 1) * p]


def tile(image, patch: int, policy: str = "pad-reflect"):
    """Crop an image into its non-overlapping patch grid.

    Returns the grid and an iterator of (coord, patch) host arrays.
    """
    img = _as_chw(image)
    grid = make_grid(img.shape[1], img.shape[2], patch, policy)
    prepared = _prepared_image(img, grid)

    def gen():
        for coord in grid.coords():
            yield coord, _patch_view(prepared, grid, *coord)

    return grid, gen()


def _ordered_coords(grid: TileGrid, order: str) -> List[Tuple[int, int]]:
    coords = list(grid.coords())
    if order == "row-major":
        return coords
    if order == "column-major":
        return sorted(coords, key=lambda c: (c[1], c[0]))
    if order == "random":
        rng = np.random.default_rng(0xC0FFEE)
        return [coords[k] for k in rng.permutation(len(coords))]
    raise ValueError(f"unknown patch order {order!r}")


def _run_over_patches(prepared, gen, grid, mode, phase, threads, order, sink=None):
    coords = _ordered_coords(grid, order)

    def work(coord):
        x = Tensor(_patch_view(prepared, grid, *coord)[None])
        y = gen.forward(x, mode, coord=coord, phase=phase)
        if sink is not None and y is not None:
            # host-side copy so the engine buffer frees immediately
            sink(coord, np.array(y.numpy()[0]))

    if threads <= 1:
        for coord in coords:
            work(coord)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for f in [pool.submit(work, c) for c in coords]:
            f.result()


def cache_pass(image, gen: Generator, grid: TileGrid, threads: int = 1, order: str = "row-major"):
    """Fill every site's statistics table; a barrier separates it from inference."""
    img = _as_chw(image)
    prepared = _prepared_image(img, grid)
    kernelless = NormMode.kin(_CACHE_KERNEL)
    with threadpool_limits(limits=1, user_api="blas"):
        _run_over_patches(prepared, gen, grid, kernelless, Phase.CACHING, threads, order)


def infer_pass(
    image,
    gen: Generator,
    grid: TileGrid,
    kernel,
    threads: int = 1,
    order: str = "row-major",
):
    """Translate every patch with kernel-convolved statistics.

    Requires a complete caching pass; errors list the unfilled cells.
    Returns the translated patches as a list of (coord, CHW array).
    """
    for st in gen.norm_states:
        if st.table is None or not st.table.complete:
            missing = st.table.unfilled_cells() if st.table is not None else "all"
            raise RuntimeError(
                f"inference before a complete caching pass: norm{st.layer_id} "
                f"has unfilled cells {missing if missing == 'all' else missing[:8]}"
            )
        if (st.table.rows, st.table.cols) != (grid.rows, grid.cols):
            raise ValueError(
                f"norm{st.layer_id}: table grid {st.table.rows}x{st.table.cols} does not "
                f"match image grid {grid.rows}x{grid.cols}"
            )
    img = _as_chw(image)
    prepared = _prepared_image(img, grid)
    out: dict = {}
    mode = NormMode.kin(kernel)
    with threadpool_limits(limits=1, user_api="blas"):
        _run_over_patches(
            prepared, gen, grid, mode, Phase.INFERENCE, threads, order,
            sink=lambda c, y: out.__setitem__(c, y),
        )
    return [(c, out[c]) for c in grid.coords()]


def assemble(grid: TileGrid, patches) -> np.ndarray:
    """Place translated patches back at their coordinates and crop per policy."""
    patches = list(patches)
    c = patches[0][1].shape[0]
    canvas = np.zeros((c, grid.padded_h, grid.padded_w), dtype=np.float32)
    p = grid.patch
    for (i, j), arr in patches:
        canvas[:, i * p : (i + 1) * p, j * p : (j + 1) * p] = arr
    return canvas[:, : grid.out_h, : grid.out_w]


@dataclass
class TranslationReport:
    """What a translation run did and what it cost."""

    mode: str
    kernel: Optional[str]
    patch: int
    rows: int
    cols: int
    image_h: int
    image_w: int
    policy: str
    threads: int
    cache_seconds: float
    infer_seconds: float
    total_seconds: float
    peak_bytes: int
    table_bytes: int
    baseline_bytes: int
    output_path: Optional[str] = None

    def to_json(self, **extra) -> str:
        d = asdict(self)
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TranslationReport":
        d = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def translate(
    image,
    gen: Generator,
    mode: NormMode,
    policy: str = "pad-reflect",
    threads: int = 1,
    order: str = "row-major",
    full_in_pixel_budget: int = DEFAULT_FULL_IN_PIXEL_BUDGET,
    load_tables: Optional[str] = None,
    save_tables: Optional[str] = None,
):
    """Translate a whole image under the given normalization mode.

    Returns (output CHW float32 in [-1, 1], TranslationReport). Peak bytes
    are measured as growth over the pre-run baseline (the resident weights),
    so patch-based modes report the same figure regardless of image size.
    """
    img = _as_chw(image)
    _, m, n = img.shape
    t_start = time.perf_counter()
    mtr = meter()
    baseline = mtr.current_bytes
    mtr.reset_peak()

    if mode.kind == "full-in":
        if m * n > full_in_pixel_budget:
            raise ValueError(
                f"full-in refused: image has {m * n} pixels, budget is "
                f"{full_in_pixel_budget}; full-image normalization is a "
                "small-image oracle, use a patch-based mode instead"
            )
        pad_h = (-m) % 4
        pad_w = (-n) % 4
        with threadpool_limits(limits=1, user_api="blas"):
            staged = Tensor(_reflect_pad_bottom_right(img, pad_h, pad_w)[None])
            y = gen.forward(staged, mode)
            out = np.array(y.numpy()[0, :, :m, :n])
            del staged, y
        total = time.perf_counter() - t_start
        report = TranslationReport(
            mode=mode.describe(), kernel=None, patch=gen.config.patch_size,
            rows=1, cols=1, image_h=m, image_w=n, policy=policy, threads=threads,
            cache_seconds=0.0, infer_seconds=total, total_seconds=total,
            peak_bytes=mtr.peak_bytes - baseline, table_bytes=0,
            baseline_bytes=baseline,
        )
        return out, report

    grid = make_grid(m, n, gen.config.patch_size, policy)
    gen.clear_run_state()
    cache_s = 0.0
    if mode.kind == "kin":
        t0 = time.perf_counter()
        if load_tables is not None:
            load_stat_tables(gen.norm_states, load_tables, grid.rows, grid.cols)
        else:
            gen.init_tables(grid.rows, grid.cols)
            cache_pass(img, gen, grid, threads=threads, order=order)
        if save_tables is not None:
            save_stat_tables(gen.norm_states, save_tables)
        cache_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        patches = infer_pass(img, gen, grid, mode.kernel, threads=threads, order=order)
        infer_s = time.perf_counter() - t0
    else:
        if mode.kind == "tin":
            t0 = time.perf_counter()
            p = gen.config.patch_size
            with threadpool_limits(limits=1, user_api="blas"):
                thumb = Tensor(bilinear_resize_array(img, p, p)[None])
                gen.forward(thumb, mode, phase=Phase.CACHING)
                del thumb
            cache_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        prepared = _prepared_image(img, grid)
        sink_store: dict = {}
        with threadpool_limits(limits=1, user_api="blas"):
            _run_over_patches(
                prepared, gen, grid, mode, Phase.INFERENCE, threads, order,
                sink=lambda c, y: sink_store.__setitem__(c, y),
            )
        patches = [(c, sink_store[c]) for c in grid.coords()]
        infer_s = time.perf_counter() - t0

    out = assemble(grid, patches)
    total = time.perf_counter() - t_start
    report = TranslationReport(
        mode=mode.describe(),
        kernel=mode.kernel.describe() if mode.kernel is not None else None,
        patch=grid.patch, rows=grid.rows, cols=grid.cols,
        image_h=m, image_w=n, policy=policy, threads=threads,
        cache_seconds=cache_s, infer_seconds=infer_s, total_seconds=total,
        peak_bytes=mtr.peak_bytes - baseline,
        table_bytes=gen.table_bytes(),
        baseline_bytes=baseline,
    )
    return out, report
