"""Dense float32 tensors with byte-accurate memory accounting.

Everything the inference engine allocates flows through this module: feature
maps, weights, and the im2col/scatter workspaces used by the convolution
kernels. A global :class:`MemoryMeter` records live engine bytes so the
constant-memory behaviour of tiled translation can be measured rather than
assumed. Host-side staging (whole images on disk or in plain numpy arrays)
is deliberately outside the meter; it plays the role of CPU-side storage in
an accelerator setup.

Convolutions are computed by gathering kernel windows into a column buffer
and running one float32 matmul per batch entry. Padding (zero or reflect)
is applied virtually while building the columns, so no padded copy of the
input is ever materialized.
"""

from __future__ import annotations

import os
import threading
import weakref
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "MemoryMeter",
    "PadSpec",
    "meter",
    "conv2d",
    "conv_transpose2d",
    "reflection_pad2d",
    "channel_stats",
    "normalize_with_stats",
    "relu",
    "tanh",
    "add",
    "bilinear_downsample",
]


class MemoryMeter:
    """Tracks current and peak live bytes of engine-managed buffers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._current = 0
        self._peak = 0

    @property
    def current_bytes(self) -> int:
        return self._current

    @property
    def peak_bytes(self) -> int:
        return self._peak

    def alloc(self, nbytes: int) -> None:
        with self._lock:
            self._current += nbytes
            if self._current > self._peak:
                self._peak = self._current

    def free(self, nbytes: int) -> None:
        with self._lock:
            self._current -= nbytes

    def reset_peak(self) -> None:
        """Start a fresh peak measurement from the current live set."""
        with self._lock:
            self._peak = self._current


_METER = MemoryMeter()


def meter() -> MemoryMeter:
    """The process-wide meter used by all tensor allocations."""
    return _METER


def _track_workspace(arr: np.ndarray) -> np.ndarray:
    """Register a scratch buffer with the meter for its lifetime."""
    n = arr.nbytes
    _METER.alloc(n)
    weakref.finalize(arr, _METER.free, n)
    return arr


class Tensor:
    """Immutable dense float32 array, registered with the memory meter.

    ``shape`` is conventionally (batch, channels, height, width) for feature
    maps; weight and parameter tensors may carry other ranks. The underlying
    buffer is marked read-only, which is what makes concurrent forward passes
    safe to share.
    """

    __slots__ = ("_data", "__weakref__")

    def __init__(self, data):
        arr = np.array(data, dtype=np.float32, copy=True, order="C")
        self._init_from_owned(arr)

    def _init_from_owned(self, arr: np.ndarray) -> None:
        arr.flags.writeable = False
        self._data = arr
        n = arr.nbytes
        _METER.alloc(n)
        weakref.finalize(self, _METER.free, n)

    @classmethod
    def _adopt(cls, arr: np.ndarray) -> "Tensor":
        """Wrap a freshly computed array without copying.

        The caller hands over ownership: the array (or its base, for a
        reshaped view of a fresh buffer) must not be retained elsewhere.
        """
        t = cls.__new__(cls)
        t._init_from_owned(arr)
        return t

    @property
    def shape(self) -> tuple:
        return self._data.shape

    @property
    def nbytes(self) -> int:
        return self._data.nbytes

    def numpy(self) -> np.ndarray:
        """Read-only view of the underlying buffer."""
        return self._data

    def __repr__(self):
        return f"Tensor(shape={self._data.shape})"


@dataclass(frozen=True)
class PadSpec:
    """Spatial padding for conv2d: ``amount`` pixels per side, zero or reflect."""

    amount: int = 0
    mode: str = "zero"

    def __post_init__(self):
        if self.amount < 0:
            raise ValueError(f"padding amount must be >= 0, got {self.amount}")
        if self.mode not in ("zero", "reflect"):
            raise ValueError(f"unknown pad mode {self.mode!r}")


def _as_padspec(padding) -> PadSpec:
    if isinstance(padding, PadSpec):
        return padding
    return PadSpec(int(padding), "zero")


def _check_4d(t: Tensor, name: str) -> np.ndarray:
    arr = t.numpy() if isinstance(t, Tensor) else np.asarray(t, dtype=np.float32)
    if arr.ndim != 4:
        raise ValueError(f"{name} must be 4-D (B, C, H, W), got shape {arr.shape}")
    return arr


def _reflect_indices(raw: np.ndarray, size: int) -> np.ndarray:
    """Mirror out-of-range indices, excluding the edge sample."""
    idx = raw.copy()
    neg = idx < 0
    idx[neg] = -idx[neg]
    over = idx > size - 1
    idx[over] = 2 * (size - 1) - idx[over]
    return idx


_DEFAULT_WORKSPACE_CAP = 512 * 1024 * 1024
_WORKSPACE_CAP = int(os.environ.get("KINTILE_CONV_WORKSPACE_MB", "512")) * 1024 * 1024


def set_conv_workspace_cap(nbytes: int) -> None:
    """Cap the conv2d column workspace; larger convolutions run in row bands."""
    global _WORKSPACE_CAP
    if nbytes < 1024:
        raise ValueError("workspace cap unreasonably small")
    _WORKSPACE_CAP = int(nbytes)


def _gather_columns(x, kh, kw, stride, pad: PadSpec, oh0: int, oh1: int, wout: int):
    """Column workspace (B, C, kh, kw, oh1-oh0, Wout) for one output-row band."""
    b, c, h, w = x.shape
    p = pad.amount
    n_oh = oh1 - oh0
    if pad.mode == "reflect":
        base_r = np.arange(oh0, oh1, dtype=np.intp) * stride - p
        base_c = np.arange(wout, dtype=np.intp) * stride - p
        rows = _reflect_indices(base_r[None, :] + np.arange(kh, dtype=np.intp)[:, None], h)
        cols_i = _reflect_indices(base_c[None, :] + np.arange(kw, dtype=np.intp)[:, None], w)
        cols = x[:, :, rows[:, None, :, None], cols_i[None, :, None, :]]
        return _track_workspace(cols)

    cols = _track_workspace(np.zeros((b, c, kh, kw, n_oh, wout), dtype=np.float32))
    for di in range(kh):
        o0 = max(oh0, (p - di + stride - 1) // stride)
        i0 = o0 * stride - p + di
        if i0 > h - 1:
            continue
        n = min(oh1 - o0, (h - 1 - i0) // stride + 1)
        if n <= 0:
            continue
        for dj in range(kw):
            q0 = max(0, (p - dj + stride - 1) // stride)
            j0 = q0 * stride - p + dj
            if j0 > w - 1:
                continue
            m = min(wout - q0, (w - 1 - j0) // stride + 1)
            if m <= 0:
                continue
            cols[:, :, di, dj, o0 - oh0 : o0 - oh0 + n, q0 : q0 + m] = x[
                :, :, i0 : i0 + n * stride : stride, j0 : j0 + m * stride : stride
            ]
    return cols


def conv2d(input: Tensor, weight: Tensor, bias=None, stride: int = 1, padding=0) -> Tensor:
    """Cross-correlation of ``input`` (B,Cin,H,W) with ``weight`` (Cout,Cin,kh,kw).

    ``padding`` is an int (zero padding) or a :class:`PadSpec`; reflect
    padding is applied virtually while gathering windows. When the column
    workspace would exceed the configured cap, output rows are processed in
    bands; each output element is the same dot product either way.
    """
    x = _check_4d(input, "input")
    w = _check_4d(weight, "weight")
    pad = _as_padspec(padding)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    cout, cin, kh, kw = w.shape
    if x.shape[1] != cin:
        raise ValueError(
            f"input has {x.shape[1]} channels but weight expects {cin}"
        )
    if kh < 1 or kw < 1:
        raise ValueError("kernel dims must be >= 1")
    b, _, h, wdt = x.shape
    p = pad.amount
    hout = (h + 2 * p - kh) // stride + 1
    wout = (wdt + 2 * p - kw) // stride + 1
    if hout <= 0 or wout <= 0:
        raise ValueError(
            f"convolution produces empty output: input {h}x{wdt}, kernel {kh}x{kw}, "
            f"stride {stride}, pad {p}"
        )
    if pad.mode == "reflect" and (p >= h or p >= wdt):
        raise ValueError(f"reflect padding {p} too large for input {h}x{wdt}")

    bytes_per_row = b * cin * kh * kw * wout * 4
    band_rows = max(1, min(hout, _WORKSPACE_CAP // max(bytes_per_row, 1)))
    w2 = w.reshape(cout, cin * kh * kw)
    out = np.empty((b, cout, hout, wout), dtype=np.float32)
    for oh0 in range(0, hout, band_rows):
        oh1 = min(oh0 + band_rows, hout)
        cols = _gather_columns(x, kh, kw, stride, pad, oh0, oh1, wout)
        mm = _track_workspace(
            np.matmul(w2, cols.reshape(b, cin * kh * kw, (oh1 - oh0) * wout))
        )
        out[:, :, oh0:oh1, :] = mm.reshape(b, cout, oh1 - oh0, wout)
        del cols, mm
    if bias is not None:
        bvec = bias.numpy() if isinstance(bias, Tensor) else np.asarray(bias, dtype=np.float32)
        if bvec.shape != (cout,):
            raise ValueError(f"bias must have shape ({cout},), got {bvec.shape}")
        out += bvec.reshape(1, cout, 1, 1)
    return Tensor._adopt(out)


def conv_transpose2d(
    input: Tensor,
    weight: Tensor,
    bias=None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """Transposed convolution; ``weight`` has layout (Cin, Cout, kh, kw).

    Output spatial size is (H-1)*stride - 2*padding + kh + output_padding.
    Contributions are scattered straight into the output buffer.
    """
    x = _check_4d(input, "input")
    w = _check_4d(weight, "weight")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if output_padding < 0 or output_padding >= stride:
        raise ValueError("output_padding must satisfy 0 <= output_padding < stride")
    cin, cout, kh, kw = w.shape
    if x.shape[1] != cin:
        raise ValueError(f"input has {x.shape[1]} channels but weight expects {cin}")
    b, _, h, wdt = x.shape
    p = padding
    hout = (h - 1) * stride - 2 * p + kh + output_padding
    wout = (wdt - 1) * stride - 2 * p + kw + output_padding
    if hout <= 0 or wout <= 0:
        raise ValueError("transposed convolution produces empty output")

    m = w.reshape(cin, cout * kh * kw)
    cols = np.matmul(m.T, x.reshape(b, cin, h * wdt))
    _track_workspace(cols)
    cols = cols.reshape(b, cout, kh, kw, h, wdt)
    out = np.zeros((b, cout, hout, wout), dtype=np.float32)
    for di in range(kh):
        i0 = max(0, (p - di + stride - 1) // stride)
        t0 = i0 * stride - p + di
        if t0 > hout - 1:
            continue
        n = min(h - i0, (hout - 1 - t0) // stride + 1)
        if n <= 0:
            continue
        for dj in range(kw):
            j0 = max(0, (p - dj + stride - 1) // stride)
            u0 = j0 * stride - p + dj
            if u0 > wout - 1:
                continue
            mm = min(wdt - j0, (wout - 1 - u0) // stride + 1)
            if mm <= 0:
                continue
            out[:, :, t0 : t0 + n * stride : stride, u0 : u0 + mm * stride : stride] += cols[
                :, :, di, dj, i0 : i0 + n, j0 : j0 + mm
            ]
    if bias is not None:
        bvec = bias.numpy() if isinstance(bias, Tensor) else np.asarray(bias, dtype=np.float32)
        if bvec.shape != (cout,):
            raise ValueError(f"bias must have shape ({cout},), got {bvec.shape}")
        out += bvec.reshape(1, cout, 1, 1)
    return Tensor._adopt(out)


def reflection_pad2d(input: Tensor, pad: int) -> Tensor:
    """Mirror-pad the two spatial dims by ``pad`` pixels (edge excluded)."""
    x = _check_4d(input, "input")
    h, w = x.shape[2], x.shape[3]
    if pad < 0:
        raise ValueError("pad must be >= 0")
    if pad >= min(h, w):
        raise ValueError(f"reflection pad {pad} must be < min(H, W) = {min(h, w)}")
    if pad == 0:
        return Tensor._adopt(x.copy())
    out = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="reflect")
    return Tensor._adopt(out)


def channel_stats(input: Tensor):
    """Per-(batch, channel) mean and population std over the spatial dims.

    Reductions accumulate in float64; results are returned as float32
    matrices of shape (B, C).
    """
    x = _check_4d(input, "input")
    if x.shape[2] * x.shape[3] < 1:
        raise ValueError("channel_stats needs at least one spatial element")
    mu64 = x.mean(axis=(2, 3), dtype=np.float64)
    sq = _track_workspace(np.square(x))
    var64 = sq.mean(axis=(2, 3), dtype=np.float64) - mu64 * mu64
    np.maximum(var64, 0.0, out=var64)
    sigma64 = np.sqrt(var64)
    return mu64.astype(np.float32), sigma64.astype(np.float32)


def normalize_with_stats(input: Tensor, mu, sigma, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Affine-normalize: gamma * (x - mu) / (sigma + eps) + beta, per channel.

    ``mu``/``sigma`` are (B, C) or (C,) arrays; ``gamma``/``beta`` are (C,).
    eps > 0 keeps constant channels finite.
    """
    x = _check_4d(input, "input")
    b, c = x.shape[0], x.shape[1]
    mu = np.asarray(mu, dtype=np.float32)
    sigma = np.asarray(sigma, dtype=np.float32)
    if mu.ndim == 1:
        mu = np.broadcast_to(mu, (b, c))
    if sigma.ndim == 1:
        sigma = np.broadcast_to(sigma, (b, c))
    g = gamma.numpy() if isinstance(gamma, Tensor) else np.asarray(gamma, dtype=np.float32)
    bt = beta.numpy() if isinstance(beta, Tensor) else np.asarray(beta, dtype=np.float32)
    if mu.shape != (b, c) or sigma.shape != (b, c):
        raise ValueError(f"stats must have shape ({b}, {c})")
    if g.shape != (c,) or bt.shape != (c,):
        raise ValueError(f"gamma/beta must have shape ({c},)")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    scale = (g[None, :] / (sigma + np.float32(eps))).astype(np.float32)
    shift = (bt[None, :] - mu * scale).astype(np.float32)
    out = x * scale[:, :, None, None]
    out += shift[:, :, None, None]
    return Tensor._adopt(out)


def relu(input: Tensor) -> Tensor:
    return Tensor._adopt(np.maximum(input.numpy(), np.float32(0.0)))


def tanh(input: Tensor) -> Tensor:
    return Tensor._adopt(np.tanh(input.numpy()))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum (residual connections)."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch in add: {a.shape} vs {b.shape}")
    return Tensor._adopt(a.numpy() + b.numpy())


def _resize_axis_weights(n_in: int, n_out: int):
    """Half-pixel-center bilinear sample positions along one axis."""
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    lo = np.floor(pos).astype(np.intp)
    frac = (pos - lo).astype(np.float32)
    lo = np.clip(lo, 0, n_in - 1)
    hi = np.clip(lo + 1, 0, n_in - 1)
    return lo, hi, frac


def bilinear_resize_array(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of the last two axes of a plain array (host-side)."""
    h, w = x.shape[-2], x.shape[-1]
    if (h, w) == (out_h, out_w):
        return x.copy()
    r_lo, r_hi, r_f = _resize_axis_weights(h, out_h)
    c_lo, c_hi, c_f = _resize_axis_weights(w, out_w)
    rf = r_f.reshape((1,) * (x.ndim - 2) + (out_h, 1))
    rows = x[..., r_lo, :] * (1.0 - rf) + x[..., r_hi, :] * rf
    cf = c_f.reshape((1,) * (x.ndim - 1) + (out_w,))
    out = rows[..., c_lo] * (1.0 - cf) + rows[..., c_hi] * cf
    return out.astype(np.float32)


def bilinear_downsample(input: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize the spatial dims with half-pixel-center bilinear sampling.

    A same-size call is an exact copy, which keeps single-patch thumbnail
    statistics bit-identical to the patch's own.
    """
    x = _check_4d(input, "input")
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    return Tensor._adopt(bilinear_resize_array(x, out_h, out_w))
