"""Image I/O: 8-bit PNG plus a raw-RGB format for very large images.

Pixel convention: 8-bit sRGB maps to the generator's [-1, 1] domain via
x / 127.5 - 1, and back via round(clamp((x + 1) * 127.5, 0, 255)).

The raw format (extension .rawi) is a 4-byte little-endian header length,
a JSON header {"height", "width", "channels", "dtype": "uint8", "order":
"HWC"}, then the row-major payload. It exists for images past PNG
practicality and can be memory-mapped for streaming reads.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "read_image",
    "write_image",
    "u8_to_signed",
    "signed_to_u8",
    "signed_chw_to_u8_hwc",
]


def u8_to_signed(img_u8: np.ndarray) -> np.ndarray:
    """uint8 HWC -> float32 CHW in [-1, 1]."""
    arr = img_u8.astype(np.float32) / 127.5 - 1.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def signed_to_u8(chw: np.ndarray) -> np.ndarray:
    """float32 CHW in [-1, 1] -> uint8 HWC, with round-and-clamp."""
    hwc = np.transpose(chw, (1, 2, 0))
    q = np.clip(np.rint((hwc + 1.0) * 127.5), 0.0, 255.0)
    return q.astype(np.uint8)


def signed_chw_to_u8_hwc(chw: np.ndarray) -> np.ndarray:
    return signed_to_u8(chw)


def _read_rawi(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
    h, w, c = header["height"], header["width"], header["channels"]
    if header.get("dtype", "uint8") != "uint8" or header.get("order", "HWC") != "HWC":
        raise ValueError(f"{path}: unsupported rawi header {header}")
    data = np.memmap(path, dtype=np.uint8, mode="r", offset=4 + hlen, shape=(h, w, c))
    return data


def _write_rawi(path: Path, img_u8: np.ndarray) -> None:
    h, w = img_u8.shape[:2]
    c = 1 if img_u8.ndim == 2 else img_u8.shape[2]
    header = json.dumps(
        {"height": int(h), "width": int(w), "channels": int(c), "dtype": "uint8", "order": "HWC"}
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(img_u8).tobytes())


def read_image(path) -> np.ndarray:
    """Load an image as float32 CHW in [-1, 1] (RGB for PNG inputs)."""
    path = Path(path)
    if path.suffix.lower() == ".rawi":
        return u8_to_signed(np.asarray(_read_rawi(path)))
    with Image.open(path) as im:
        return u8_to_signed(np.asarray(im.convert("RGB")))


def write_image(path, chw: np.ndarray) -> None:
    """Write a float32 CHW [-1, 1] image as 8-bit PNG or .rawi."""
    path = Path(path)
    u8 = signed_to_u8(chw)
    if path.suffix.lower() == ".rawi":
        _write_rawi(path, u8)
        return
    Image.fromarray(u8).save(path)
