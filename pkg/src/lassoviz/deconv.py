"""Deconvnet / guided-backprop heatmaps with optional stride compensation.

With ``stride_fix`` on, a strided layer's incoming backward signal is first
nearest-neighbour resized to the side the forward op would have produced at
stride 1 (``A + 2*O - M + 1``); the inverse op then runs at stride 1. This
removes the periodic lattice that strided transposed convolutions leave behind.
"""
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .tensor import (
    ShapeError,
    bilinear_resize,
    conv2d_transpose,
    maxpool2d,
    nn_resize,
    stride1_side,
    unpool2d,
)

MODES = ("ours", "deconv_gb_vanilla", "upsampled_activation")


@dataclass(frozen=True)
class BackwardPolicy:
    stride_fix: bool = True
    guided: bool = True
    pool_fix: bool = False  # also compensate strided max-pooling


POLICIES = {
    "ours": BackwardPolicy(stride_fix=True, guided=True),
    "deconv_gb_vanilla": BackwardPolicy(stride_fix=False, guided=True),
}


@dataclass
class Heatmap:
    values: np.ndarray  # (h, w) in [0, 1]
    source: object = None
    mode: str = "ours"
    raw_min: float = 0.0
    raw_max: float = 0.0

    def to_png(self, path):
        img = np.round(255 * np.clip(self.values, 0, 1)).astype(np.uint8)
        Image.fromarray(img, mode="L").save(path)
        sidecar = os.path.splitext(path)[0] + ".txt"
        with open(sidecar, "w") as fh:
            fh.write(f"source\t{self.source}\nmode\t{self.mode}\n"
                     f"raw_min\t{self.raw_min!r}\nraw_max\t{self.raw_max!r}\n")


@dataclass
class BackwardRecord:
    """Instrumentation of one inverse step."""

    layer: int
    kind: str
    stride: int
    in_side: int
    out_side: int


def compensate_stride(incoming, side, kernel, stride, pad):
    """Resize the backward signal to the stride-1 feature-map side of a layer with input ``side``."""
    target = stride1_side(side, kernel, pad)
    if target < 1:
        raise ShapeError(f"degenerate geometry: A'_d = {target}")
    if stride == 1 and incoming.shape[2] == target:
        return incoming
    return nn_resize(incoming, target, target)


def start_signal(net, trace, feature):
    """Layer output with every channel except the feature's zeroed."""
    net.check_feature(feature)
    out = trace.outputs[net.response_layer(feature.layer)]
    sig = np.zeros_like(out)
    sig[:, feature.filter] = out[:, feature.filter]
    return sig


def backward_from(net, trace, layer_index, signal, policy=BackwardPolicy(), records=None):
    """Push ``signal`` (shaped like layer ``layer_index``'s output) back to input space."""
    g = np.asarray(signal, dtype=np.float32)
    for i in range(layer_index, -1, -1):
        layer = net.layers[i]
        x_in = trace.inputs if i == 0 else trace.outputs[i - 1]
        kind = layer.kind
        in_side = g.shape[2] if g.ndim == 4 else g.shape[-1]
        stride = 1
        if kind == "conv":
            spec = layer.spec
            stride = spec.stride
            if policy.stride_fix and spec.stride > 1:
                g = compensate_stride(g, x_in.shape[2], spec.kernel, spec.stride, spec.pad)
                in_side = g.shape[2]
                stride = 1
            g = conv2d_transpose(g, layer.weight, spec, stride=stride)
        elif kind == "relu":
            if policy.guided:
                g = g * ((x_in > 0) & (g > 0))
            else:
                g = g * (g > 0)
        elif kind == "maxpool":
            stride = layer.stride
            if policy.pool_fix and layer.stride > 1:
                g = compensate_stride(g, x_in.shape[2], layer.window, layer.stride, 0)
                in_side = g.shape[2]
                _, sw = maxpool2d(x_in, layer.window, 1)
                stride = 1
                g = unpool2d(g, sw, x_in.shape[2])
            else:
                g = unpool2d(g, trace.switches[i], x_in.shape[2])
        elif kind == "flatten":
            g = g.reshape(x_in.shape)
        elif kind == "fc":
            g = g @ layer.weight
        elif kind == "softmax":
            raise ValueError("cannot run the backward pass through softmax")
        if records is not None:
            records.append(BackwardRecord(i, kind, stride, in_side, g.shape[-1]))
    return np.asarray(g, dtype=np.float32)


def deconv_backward(net, trace, feature, policy=BackwardPolicy(), records=None):
    """Input-shaped signal obtained by back-projecting one filter's activations."""
    if not trace.captured:
        raise ValueError("trace has no captured activations")
    sig = start_signal(net, trace, feature)
    return backward_from(net, trace, feature.layer, sig, policy, records)


def normalize(raw):
    """Min-max scale to [0, 1]; an all-zero map stays zero, a constant nonzero map becomes 1."""
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        out = np.zeros_like(raw) if hi == 0 else np.ones_like(raw)
    else:
        out = (raw - lo) / (hi - lo)
    return out, lo, hi


def signal_to_heatmap(signal, source=None, mode="ours"):
    """Collapse channels by per-pixel max |value| then min-max normalize."""
    s = np.asarray(signal)
    if s.ndim == 4:
        s = s[0]
    raw = np.abs(s).max(axis=0)
    values, lo, hi = normalize(raw)
    return Heatmap(values, source, mode, lo, hi)


def upsample_activation(net, trace, feature):
    """Baseline heatmap: bilinear upscale of one conv channel's activation map."""
    net.check_feature(feature)
    if net.layers[feature.layer].kind != "conv":
        raise ValueError("upsampled activations are not applicable to fc layers")
    act = trace.outputs[net.response_layer(feature.layer)][:1, feature.filter:feature.filter + 1]
    side = net.input_side
    up = act if act.shape[2] == side else bilinear_resize(act, side, side)
    values, lo, hi = normalize(up[0, 0])
    return Heatmap(values, feature, "upsampled_activation", lo, hi)


def feature_heatmap(net, trace, feature, mode="ours", policy=None):
    if mode == "upsampled_activation":
        return upsample_activation(net, trace, feature)
    policy = policy or POLICIES[mode]
    return signal_to_heatmap(deconv_backward(net, trace, feature, policy), feature, mode)


def box_smooth(h, period):
    """Mean over the window rows i..i+S-1, cols j..j+S-1 with edge replication."""
    h = np.asarray(h, dtype=np.float64)
    padded = np.pad(h, ((0, period - 1), (0, period - 1)), mode="edge")
    c = np.cumsum(np.cumsum(np.pad(padded, ((1, 0), (1, 0))), axis=0), axis=1)
    n, m = h.shape
    s = period
    total = c[s:s + n, s:s + m] - c[:n, s:s + m] - c[s:s + n, :m] + c[:n, :m]
    return total / (s * s)


def lattice_energy(h, period, phases="origin"):
    """Mean squared deviation from the box-smoothed map.

    ``phases="origin"`` keeps only pixels on the stride lattice (i, j = 0 mod
    period); ``phases="all"`` averages over every pixel.
    """
    if period < 2:
        raise ValueError("period must be >= 2")
    values = h.values if isinstance(h, Heatmap) else np.asarray(h, dtype=np.float64)
    diff = values - box_smooth(values, period)
    if phases == "origin":
        diff = diff[::period, ::period]
    elif phases != "all":
        raise ValueError(f"unknown phases {phases!r}")
    return float(np.mean(diff ** 2))
