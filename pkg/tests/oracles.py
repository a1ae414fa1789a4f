"""Independent brute-force references used by the test suite.

Everything here is deliberately written as plain nested loops (or direct
formula evaluation) with no shared code paths with the package, so it can
serve as an oracle for the vectorized implementations.
"""

import numpy as np


def conv2d_loops(x, w, bias=None, stride=1, pad=0, pad_mode="zero"):
    """Sextuple-loop cross-correlation reference."""
    b, cin, h, wd = x.shape
    cout, cin2, kh, kw = w.shape
    assert cin == cin2
    hout = (h + 2 * pad - kh) // stride + 1
    wout = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((b, cout, hout, wout), dtype=np.float64)
    for bi in range(b):
        for co in range(cout):
            for oi in range(hout):
                for oj in range(wout):
                    acc = 0.0
                    for ci in range(cin):
                        for di in range(kh):
                            for dj in range(kw):
                                ii = oi * stride - pad + di
                                jj = oj * stride - pad + dj
                                if pad_mode == "zero":
                                    if ii < 0 or ii >= h or jj < 0 or jj >= wd:
                                        continue
                                else:  # reflect, edge sample excluded
                                    if ii < 0:
                                        ii = -ii
                                    elif ii >= h:
                                        ii = 2 * (h - 1) - ii
                                    if jj < 0:
                                        jj = -jj
                                    elif jj >= wd:
                                        jj = 2 * (wd - 1) - jj
                                acc += float(x[bi, ci, ii, jj]) * float(w[co, ci, di, dj])
                    out[bi, co, oi, oj] = acc + (float(bias[co]) if bias is not None else 0.0)
    return out.astype(np.float32)


def conv_transpose2d_loops(x, w, bias=None, stride=1, pad=0, output_padding=0):
    """Scatter-add reference for the transposed convolution."""
    b, cin, h, wd = x.shape
    cin2, cout, kh, kw = w.shape
    assert cin == cin2
    hout = (h - 1) * stride - 2 * pad + kh + output_padding
    wout = (wd - 1) * stride - 2 * pad + kw + output_padding
    out = np.zeros((b, cout, hout, wout), dtype=np.float64)
    for bi in range(b):
        for ci in range(cin):
            for i in range(h):
                for j in range(wd):
                    v = float(x[bi, ci, i, j])
                    for co in range(cout):
                        for di in range(kh):
                            for dj in range(kw):
                                ti = i * stride - pad + di
                                tj = j * stride - pad + dj
                                if 0 <= ti < hout and 0 <= tj < wout:
                                    out[bi, co, ti, tj] += v * float(w[ci, co, di, dj])
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64).reshape(1, cout, 1, 1)
    return out.astype(np.float32)


def reflection_pad_loops(x, pad):
    """Index-mirroring reference for reflection padding."""
    b, c, h, w = x.shape
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    for oi in range(h + 2 * pad):
        ii = oi - pad
        if ii < 0:
            ii = -ii
        elif ii >= h:
            ii = 2 * (h - 1) - ii
        for oj in range(w + 2 * pad):
            jj = oj - pad
            if jj < 0:
                jj = -jj
            elif jj >= w:
                jj = 2 * (w - 1) - jj
            out[:, :, oi, oj] = x[:, :, ii, jj]
    return out


def kin_table_conv_loops(mu_table, kernel):
    """Convolve a (rows, cols, C) table with a kernel over an explicitly
    edge-padded copy, matching the engine's fixed row-major summation order.
    """
    rows, cols, c = mu_table.shape
    size = kernel.shape[0]
    q = size // 2
    padded = np.pad(mu_table, ((q, q), (q, q), (0, 0)), mode="edge")
    out = np.zeros((rows, cols, c), dtype=np.float32)
    k64 = kernel.astype(np.float64)
    for i in range(rows):
        for j in range(cols):
            acc = np.zeros(c, dtype=np.float64)
            for u in range(size):
                for v in range(size):
                    acc += k64[u, v] * padded[i + u, j + v, :].astype(np.float64)
            out[i, j] = acc.astype(np.float32)
    return out


def ssim_windows_loops(a, b, window=8, c1=(0.01 * 255) ** 2, c2=(0.03 * 255) ** 2):
    """Per-window SSIM reference: explicit loops over every sliding window."""
    h, w = a.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            wa = a[i : i + window, j : j + window].astype(np.float64)
            wb = b[i : i + window, j : j + window].astype(np.float64)
            mx, my = wa.mean(), wb.mean()
            vx = ((wa - mx) ** 2).mean()
            vy = ((wb - my) ** 2).mean()
            cxy = ((wa - mx) * (wb - my)).mean()
            num = (2 * mx * my + c1) * (2 * cxy + c2)
            den = (mx * mx + my * my + c1) * (vx + vy + c2)
            vals.append(num / den)
    return float(np.mean(vals))
