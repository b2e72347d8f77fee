"""Dense NCHW float32 arrays and the kernels every other module builds on.

Tensors are plain ``numpy.ndarray`` objects of shape ``(n, c, h, w)`` and dtype
float32. Functions never modify their inputs.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels


class NonFiniteError(ValueError):
    """NaN or infinity where finite numbers are required."""


class ShapeError(ValueError):
    """Raised when array dimensions violate an operation's shape contract."""


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    stride: int = 1
    pad: int = 0
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.pad < 0:
            raise ShapeError(f"invalid conv geometry {self}")

    def out_side(self, side):
        return out_side(side, self.kernel, self.stride, self.pad)


def out_side(side, kernel, stride=1, pad=0):
    """Output side of a sliding-window op; raises unless the windows tile exactly."""
    span = side + 2 * pad - kernel
    if span < 0:
        raise ShapeError(f"window {kernel} larger than padded input {side + 2 * pad}")
    if span % stride:
        raise ShapeError(
            f"input side {side} with kernel {kernel}, pad {pad} is not divisible by stride {stride}"
        )
    return span // stride + 1


def stride1_side(side, kernel, pad=0):
    """Side of the feature map the op would produce with stride 1."""
    return side + 2 * pad - kernel + 1


def as_tensor(x):
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 4:
        raise ShapeError(f"expected a 4-D (n, c, h, w) array, got ndim={x.ndim}")
    return np.ascontiguousarray(x)


def _check_square(x, what="input"):
    if x.shape[2] != x.shape[3]:
        raise ShapeError(f"{what} must be square, got height {x.shape[2]} and width {x.shape[3]}")


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d(x, weights, bias, spec):
    """Cross-correlation with zero padding. ``weights`` is (out, in, k, k)."""
    x = as_tensor(x)
    _check_square(x)
    n, c, side, _ = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"input channels {c} != spec.in_channels {spec.in_channels}")
    if weights.shape != (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel):
        raise ShapeError(f"weight shape {weights.shape} does not match {spec}")
    b = spec.out_side(side)
    cols = kernels.im2col(_pad(x, spec.pad), spec.kernel, spec.stride)
    w2 = np.asarray(weights, dtype=np.float32).reshape(spec.out_channels, -1)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float32)[None, :, None]
    return out.reshape(n, spec.out_channels, b, b)


def conv2d_transpose(y, weights, spec, stride=None):
    """Exact adjoint of :func:`conv2d` (bias 0) for the same spec.

    ``stride`` overrides ``spec.stride``; the output side is whatever the
    adjoint geometry gives, ``(B - 1) * S + M - 2 * O``.
    """
    y = as_tensor(y)
    _check_square(y)
    n, k, b, _ = y.shape
    if k != spec.out_channels:
        raise ShapeError(f"input channels {k} != spec.out_channels {spec.out_channels}")
    s = spec.stride if stride is None else stride
    m, o = spec.kernel, spec.pad
    padded = (b - 1) * s + m
    if padded - 2 * o < 1:
        raise ShapeError(f"transpose output side {padded - 2 * o} < 1")
    w2 = np.asarray(weights, dtype=np.float32).reshape(spec.out_channels, -1)
    cols = np.matmul(w2.T, y.reshape(n, k, b * b))
    full = kernels.col2im(np.ascontiguousarray(cols), spec.in_channels, padded, padded, m, s)
    if o:
        full = full[:, :, o:-o, o:-o]
    return np.ascontiguousarray(full)


def conv2d_grads(x, weights, grad_out, spec):
    """Gradients of conv2d w.r.t. (input, weights, bias)."""
    x = as_tensor(x)
    n, c, side, _ = x.shape
    k, b = grad_out.shape[1], grad_out.shape[2]
    cols = kernels.im2col(_pad(x, spec.pad), spec.kernel, spec.stride)
    g = np.ascontiguousarray(grad_out, dtype=np.float32).reshape(n, k, b * b)
    gw = np.einsum("nkp,nrp->kr", g, cols, optimize=True).reshape(weights.shape)
    gb = g.sum(axis=(0, 2), dtype=np.float64).astype(np.float32)
    gx = conv2d_transpose(grad_out, weights, spec)
    return gx, gw.astype(np.float32), gb


def maxpool2d(x, window, stride):
    """Max pooling; returns (output, switches) with switches as flat h*w argmax indices."""
    x = as_tensor(x)
    _check_square(x)
    side = x.shape[2]
    if window > side:
        raise ShapeError(f"pool window {window} larger than input side {side}")
    out_side(side, window, stride)
    return kernels.maxpool(x, window, stride)


def unpool2d(y, switches, side):
    """Route each pooled value back to its recorded argmax cell (summing overlaps)."""
    y = np.ascontiguousarray(y, dtype=np.float32)
    return kernels.unpool(y, np.ascontiguousarray(switches, dtype=np.int64), side, side)


def nn_resize(x, new_h, new_w):
    """Nearest-neighbour resize: destination (i, j) copies source (floor(i*h/H), floor(j*w/W))."""
    x = as_tensor(x)
    if new_h < 1 or new_w < 1:
        raise ShapeError(f"target size must be positive, got {new_h}x{new_w}")
    h, w = x.shape[2:]
    rows = (np.arange(new_h) * h) // new_h
    cols = (np.arange(new_w) * w) // new_w
    return np.ascontiguousarray(x[:, :, rows[:, None], cols[None, :]])


def bilinear_resize(x, new_h, new_w):
    """Bilinear resize with half-pixel centres and edge clamping."""
    x = as_tensor(x)
    h, w = x.shape[2:]

    def axis(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    r0, r1, fr = axis(new_h, h)
    c0, c1, fc = axis(new_w, w)
    x64 = x.astype(np.float64)
    top = x64[:, :, r0, :] * (1 - fr)[:, None] + x64[:, :, r1, :] * fr[:, None]
    out = top[:, :, :, c0] * (1 - fc) + top[:, :, :, c1] * fc
    return out.astype(np.float32)


def channel_l2(x):
    """Per-channel L2 norm of a single image, accumulated in float64."""
    x = as_tensor(x)
    if x.shape[0] != 1:
        raise ShapeError(f"channel_l2 expects a single image, got batch {x.shape[0]}")
    flat = x[0].reshape(x.shape[1], -1).astype(np.float64)
    return np.sqrt(np.einsum("cp,cp->c", flat, flat))


def relu(x):
    return np.maximum(x, 0).astype(np.float32, copy=False)


def softmax(z):
    """Row-wise softmax of a (n, classes) array, computed in float64."""
    z = np.asarray(z, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def matmul(a, b):
    return np.matmul(np.asarray(a, dtype=np.float32), np.asarray(b, dtype=np.float32))


def multiply(a, b):
    return np.multiply(a, b)


def add(a, b):
    return np.add(a, b)
