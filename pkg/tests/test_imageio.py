"""Pixel conventions, PNG and raw-format round-trips, synthetic images."""

import numpy as np
import pytest

from kintile.imageio import read_image, signed_to_u8, u8_to_signed, write_image
from kintile.synthetic import gradient_image, seam_benchmark_image, tiled_duplicate_image


def test_pixel_convention_exact_values():
    u8 = np.array([[[0, 128, 255]]], dtype=np.uint8).reshape(1, 1, 3)
    signed = u8_to_signed(u8)
    np.testing.assert_allclose(signed[:, 0, 0], [-1.0, 128 / 127.5 - 1.0, 1.0], atol=1e-7)
    back = signed_to_u8(signed)
    np.testing.assert_array_equal(back, u8)


def test_signed_to_u8_clamps_and_rounds():
    chw = np.array([[[-1.2, 1.2, 0.0]]], dtype=np.float32).reshape(3, 1, 1)
    u8 = signed_to_u8(chw)
    assert u8[0, 0, 0] == 0 and u8[0, 0, 1] == 255
    assert u8[0, 0, 2] == 128  # (0+1)*127.5 = 127.5 rounds to even


def test_png_roundtrip_u8_exact(tmp_path):
    rng = np.random.default_rng(1)
    u8 = rng.integers(0, 256, (20, 30, 3)).astype(np.uint8)
    img = u8_to_signed(u8)
    path = tmp_path / "img.png"
    write_image(path, img)
    back = read_image(path)
    np.testing.assert_array_equal(signed_to_u8(back), u8)
    assert back.shape == (3, 20, 30)


def test_rawi_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    u8 = rng.integers(0, 256, (12, 17, 3)).astype(np.uint8)
    path = tmp_path / "img.rawi"
    write_image(path, u8_to_signed(u8))
    back = read_image(path)
    np.testing.assert_array_equal(signed_to_u8(back), u8)


def test_gradient_image_shape_and_range():
    img = gradient_image(32, 64)
    assert img.shape == (3, 32, 64)
    assert img.min() >= -1.0 and img.max() <= 1.0
    # brightness increases left to right
    assert img[0, :, -1].mean() > img[0, :, 0].mean()


def test_seam_benchmark_texture_fades():
    img = seam_benchmark_image(64, 256)
    detrended = img[0] - img[0].mean(axis=0, keepdims=True)  # remove the ramp
    left = detrended[:, :64].std()
    right = detrended[:, -64:].std()
    assert left > 5 * right
    assert img.min() >= -1.0 and img.max() <= 1.0


def test_tiled_duplicate_tiles_exactly():
    patch = gradient_image(8, 8)
    img = tiled_duplicate_image(patch, 2, 3)
    assert img.shape == (3, 16, 24)
    np.testing.assert_array_equal(img[:, 8:16, 16:24], patch)
