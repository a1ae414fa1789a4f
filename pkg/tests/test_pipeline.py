"""Tiling, two-phase translation, persistence, determinism, memory."""

import gc

import numpy as np
import pytest

from kintile.generator import Generator, GeneratorConfig
from kintile.normalize import NormMode, build_kernel
from kintile.pipeline import (
    TranslationReport,
    assemble,
    cache_pass,
    infer_pass,
    make_grid,
    tile,
    translate,
)
from kintile.synthetic import gradient_image
from kintile.tensor import Tensor, meter

CFG = GeneratorConfig(base_width=8, n_resblocks=2, patch_size=16)
GEN = Generator.build(CFG, 123)
K1 = build_kernel("constant", 1)
K3 = build_kernel("constant", 3)


def image(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, (3, h, w)).astype(np.float32)


# ----------------------------------------------------------------- tiling


def test_grid_floor_division():
    g = make_grid(1024, 1024, 512)
    assert (g.rows, g.cols) == (2, 2)
    assert len(list(g.coords())) == 4


def test_grid_strict_crop_drops_remainder():
    g = make_grid(1100, 1100, 512, "strict-crop")
    assert (g.rows, g.cols) == (2, 2)
    assert (g.out_h, g.out_w) == (1024, 1024)


def test_grid_pad_reflect_covers_remainder():
    g = make_grid(1100, 1100, 512, "pad-reflect")
    assert (g.rows, g.cols) == (3, 3)
    assert (g.out_h, g.out_w) == (1100, 1100)


def test_strict_crop_requires_full_patch():
    with pytest.raises(ValueError, match="full"):
        make_grid(100, 700, 512, "strict-crop")


def test_tile_yields_expected_patches():
    img = image(32, 48)
    grid, patches = tile(img, 16, "strict-crop")
    got = dict(((c, p.copy()) for c, p in patches))
    assert len(got) == 2 * 3
    np.testing.assert_array_equal(got[(1, 2)], img[:, 16:32, 32:48])


def test_assembly_is_exact_inverse():
    img = image(48, 32, seed=4)
    grid, patches = tile(img, 16)
    out = assemble(grid, patches)
    np.testing.assert_array_equal(out, img)


# ---------------------------------------------------------- mode behaviour


def test_single_patch_any_mode_equals_direct_forward():
    img = image(16, 16, seed=7)
    direct = GEN.forward(Tensor(img[None]), NormMode.patch_in()).numpy()[0]
    for mode in (NormMode.full_in(), NormMode.patch_in(), NormMode.tin(),
                 NormMode.kin(K3), NormMode.kin(build_kernel("global"))):
        out, rep = translate(img, GEN, mode)
        np.testing.assert_allclose(out, direct, atol=1e-5)
        assert rep.rows == rep.cols == 1 or mode.kind == "full-in"


def test_kin_size1_equals_patch_in_pixelwise():
    img = gradient_image(64, 64)
    out_kin, _ = translate(img, GEN, NormMode.kin(K1))
    out_pin, _ = translate(img, GEN, NormMode.patch_in())
    assert np.abs(out_kin - out_pin).max() < 1e-5


def test_tin_runs_thumbnail_capture():
    img = gradient_image(48, 48)
    out, rep = translate(img, GEN, NormMode.tin())
    assert out.shape == (3, 48, 48)
    assert rep.cache_seconds >= 0.0
    assert np.isfinite(out).all()


def test_full_in_budget_guard():
    img = image(32, 32)
    with pytest.raises(ValueError, match="budget"):
        translate(img, GEN, NormMode.full_in(), full_in_pixel_budget=100)


def test_pad_reflect_output_matches_input_dims():
    img = gradient_image(40, 56)  # not multiples of 16
    out, rep = translate(img, GEN, NormMode.kin(K3), policy="pad-reflect")
    assert out.shape == (3, 40, 56)
    assert (rep.rows, rep.cols) == (3, 4)


def test_strict_crop_output_truncated():
    img = gradient_image(40, 56)
    out, rep = translate(img, GEN, NormMode.patch_in(), policy="strict-crop")
    assert out.shape == (3, 32, 48)


# --------------------------------------------------------------- two-phase


def test_cache_pass_fills_all_tables():
    img = gradient_image(32, 48)
    grid = make_grid(32, 48, 16)
    GEN.init_tables(grid.rows, grid.cols)
    cache_pass(img, GEN, grid)
    assert GEN.tables_complete()
    for st in GEN.norm_states:
        assert st.table.filled.sum() == grid.rows * grid.cols
    GEN.clear_run_state()


def test_infer_before_cache_is_an_error():
    img = gradient_image(32, 32)
    grid = make_grid(32, 32, 16)
    GEN.init_tables(grid.rows, grid.cols)
    with pytest.raises(RuntimeError, match="unfilled"):
        infer_pass(img, GEN, grid, K1)
    GEN.clear_run_state()


def test_cache_pass_threads_identical_tables():
    img = gradient_image(48, 48, texture=0.2)
    grid = make_grid(48, 48, 16)
    tables = []
    for threads in (1, 4):
        GEN.init_tables(grid.rows, grid.cols)
        cache_pass(img, GEN, grid, threads=threads)
        tables.append([(st.table.mu.copy(), st.table.sigma.copy()) for st in GEN.norm_states])
        GEN.clear_run_state()
    for (mu1, s1), (mu2, s2) in zip(*tables):
        np.testing.assert_array_equal(mu1, mu2)
        np.testing.assert_array_equal(s1, s2)


def test_persisted_tables_reproduce_output(tmp_path):
    img = gradient_image(48, 32)
    path = str(tmp_path / "tables.urw")
    out1, _ = translate(img, GEN, NormMode.kin(K3), save_tables=path)
    out2, _ = translate(img, GEN, NormMode.kin(K3), load_tables=path)
    np.testing.assert_array_equal(out1, out2)


def test_translate_threads_and_order_independent():
    img = gradient_image(48, 48)
    base, _ = translate(img, GEN, NormMode.kin(K3), threads=1, order="row-major")
    for threads, order in [(2, "row-major"), (4, "column-major"), (1, "random"), (3, "random")]:
        out, _ = translate(img, GEN, NormMode.kin(K3), threads=threads, order=order)
        np.testing.assert_array_equal(out, base)


# ------------------------------------------------------------------ memory


def test_kin_peak_flat_across_grid_sizes():
    gc.collect()
    _, rep_small = translate(gradient_image(32, 32), GEN, NormMode.kin(K3))
    gc.collect()
    _, rep_big = translate(gradient_image(96, 96), GEN, NormMode.kin(K3))
    assert rep_small.peak_bytes > 0
    diff = abs(rep_big.peak_bytes - rep_small.peak_bytes) / rep_small.peak_bytes
    assert diff < 0.05
    assert rep_big.table_bytes > rep_small.table_bytes


def test_full_in_peak_scales_with_area():
    gc.collect()
    _, rep1 = translate(image(32, 32, seed=1), GEN, NormMode.full_in())
    gc.collect()
    _, rep2 = translate(image(64, 64, seed=2), GEN, NormMode.full_in())
    assert rep2.peak_bytes >= 4 * rep1.peak_bytes


def test_meter_returns_to_baseline_after_translate():
    m = meter()
    gc.collect()
    before = m.current_bytes
    out, _ = translate(gradient_image(32, 32), GEN, NormMode.kin(K3))
    del out
    GEN.clear_run_state()
    gc.collect()
    assert m.current_bytes == before


# ------------------------------------------------------------------ report


def test_report_json_roundtrip():
    img = gradient_image(32, 32)
    _, rep = translate(img, GEN, NormMode.kin(K3))
    back = TranslationReport.from_json(rep.to_json())
    assert back == rep
    assert back.mode == "kin/constant3"
    assert back.kernel == "constant3"
