"""Writer/reader for the portable .urw weight container.

Byte layout (little-endian): magic b"URW1", version u32, entry count u32,
then per entry in strictly ascending name order: name length u16, UTF-8
name, rank u8, dims u32*rank, raw float32 data. The layout is normative
and bit-exact; this implementation is kept independent of the inference
engine's so the two cross-validate each other.
"""

from __future__ import annotations

import struct
from typing import Dict, Mapping

import numpy as np

MAGIC = b"URW1"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "write_container", "read_container"]


def write_container(path, entries: Mapping[str, np.ndarray]) -> None:
    names = sorted(entries)
    if len(names) != len(set(names)):
        raise ValueError("duplicate entry names")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(names))]
    for name in names:
        arr = np.ascontiguousarray(entries[name], dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def read_container(path) -> Dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = 12
    out: Dict[str, np.ndarray] = {}
    prev = None
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        if prev is not None and name <= prev:
            raise ValueError(f"{path}: names not strictly ascending at {name!r}")
        prev = name
        (rank,) = struct.unpack_from("<B", blob, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", blob, off) if rank else ()
        off += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        if off + 4 * n > len(blob):
            raise ValueError(f"{path}: truncated data for {name!r}")
        out[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims).copy()
        off += 4 * n
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes")
    return out
