"""Pure-numpy versions of the compiled kernels (same signatures, same summation order)."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, m, s):
    return sliding_window_view(x, (m, m), axis=(2, 3))[:, :, ::s, ::s]


def im2col(x, m, s):
    n, c = x.shape[:2]
    win = _windows(x, m, s)  # n, c, bh, bw, m, m
    bh, bw = win.shape[2:4]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * m * m, bh * bw)
    return np.ascontiguousarray(cols, dtype=np.float32)


def col2im(cols, c, h, w, m, s):
    n = cols.shape[0]
    bh = (h - m) // s + 1
    bw = (w - m) // s + 1
    blocks = cols.reshape(n, c, m, m, bh, bw)
    out = np.zeros((n, c, h, w), dtype=np.float32)
    for ki in range(m):
        for kj in range(m):
            out[:, :, ki:ki + s * (bh - 1) + 1:s, kj:kj + s * (bw - 1) + 1:s] += blocks[:, :, ki, kj]
    return out


def maxpool(x, m, s):
    n, c, h, w = x.shape
    win = _windows(x, m, s)
    bh, bw = win.shape[2:4]
    flat = win.reshape(n, c, bh, bw, m * m)
    arg = flat.argmax(axis=-1)  # first occurrence on ties
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    ki, kj = np.divmod(arg, m)
    rows = np.arange(bh)[:, None] * s + ki
    cols = np.arange(bw)[None, :] * s + kj
    switches = (rows * w + cols).astype(np.int64)
    return np.ascontiguousarray(out, dtype=np.float32), switches


def unpool(g, switches, h, w):
    n, c = g.shape[:2]
    out = np.zeros((n, c, h * w), dtype=np.float32)
    ni, ci = np.indices((n, c))
    idx = switches.reshape(n, c, -1)
    vals = g.reshape(n, c, -1)
    # np.add.at walks indices in order, matching the compiled loop
    np.add.at(out, (ni[..., None], ci[..., None], idx), vals)
    return out.reshape(n, c, h, w)
