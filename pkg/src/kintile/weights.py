"""Portable named-tensor container (.urw) and the WeightStore facade.

Byte layout (all integers little-endian):

    magic   4 bytes  b"URW1"
    version u32      currently 1
    count   u32      number of entries
    entry   repeated, in strictly ascending name order:
        name_len u16
        name     UTF-8 bytes
        rank     u8
        dims     u32 * rank
        data     float32 * prod(dims), little-endian

The same container carries generator weights (conv kernels, biases,
per-site gamma/beta) and cached-statistics sidecars (layer{id}.mu /
layer{id}.sigma grids), so a caching pass can be persisted and reused.
"""

from __future__ import annotations

import struct
from typing import Dict, Mapping

import numpy as np

MAGIC = b"URW1"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "write_container", "read_container", "WeightStore"]


def write_container(path, entries: Mapping[str, np.ndarray]) -> None:
    """Write named float32 arrays to ``path`` in sorted-name order."""
    names = sorted(entries)
    if len(names) != len(set(names)):
        raise ValueError("duplicate entry names")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(names)))
        for name in names:
            arr = np.ascontiguousarray(entries[name], dtype="<f4")
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"entry name too long: {name[:32]}...")
            if arr.ndim > 255:
                raise ValueError(f"entry {name}: rank {arr.ndim} exceeds container limit")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def read_container(path) -> Dict[str, np.ndarray]:
    """Read a container, validating magic, version, ordering and length."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    (count,) = struct.unpack_from("<I", blob, 8)
    off = 12
    out: Dict[str, np.ndarray] = {}
    prev = None
    for _ in range(count):
        if off + 2 > len(blob):
            raise ValueError(f"{path}: truncated entry header")
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        if prev is not None and name <= prev:
            raise ValueError(f"{path}: entries not in strictly ascending order at {name!r}")
        prev = name
        (rank,) = struct.unpack_from("<B", blob, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", blob, off) if rank else ()
        off += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = 4 * n
        if off + nbytes > len(blob):
            raise ValueError(f"{path}: entry {name!r} data extends past end of file")
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
        out[name] = arr.astype(np.float32)
        off += nbytes
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes after last entry")
    return out


class WeightStore:
    """Named parameter tensors with shape-checked access.

    ``take`` pops an entry so the caller can verify completeness: anything
    left after construction is an extra, rejected unless ``allow_extra``.
    """

    def __init__(self, params: Mapping[str, np.ndarray]):
        self._params = {k: np.asarray(v, dtype=np.float32) for k, v in params.items()}

    @classmethod
    def load(cls, path) -> "WeightStore":
        return cls(read_container(path))

    def save(self, path) -> None:
        write_container(path, self._params)

    def names(self):
        return sorted(self._params)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def take(self, name: str, shape) -> np.ndarray:
        if name not in self._params:
            raise KeyError(f"missing parameter {name!r}")
        arr = self._params.pop(name)
        if tuple(arr.shape) != tuple(shape):
            raise ValueError(
                f"parameter {name!r} has shape {tuple(arr.shape)}, expected {tuple(shape)}"
            )
        return arr

    def remaining(self):
        return sorted(self._params)
