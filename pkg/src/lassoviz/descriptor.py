"""Image-wise internal response descriptors and the (X, L) matrices fed to the selector."""
from dataclasses import dataclass

import numpy as np

from .network import FeatureId, forward


@dataclass(frozen=True)
class Layout:
    """Maps flat descriptor indices to (layer, filter) pairs.

    ``segments`` lists ``(layer, n_filters)`` in concatenation order.
    """

    segments: tuple

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum([n for _, n in self.segments])]).astype(int)

    @property
    def size(self):
        return int(sum(n for _, n in self.segments))

    def feature_of_index(self, k):
        if not 0 <= k < self.size:
            raise IndexError(f"flat index {k} outside descriptor of length {self.size}")
        offsets = self.offsets
        seg = int(np.searchsorted(offsets, k, side="right")) - 1
        return FeatureId(self.segments[seg][0], int(k - offsets[seg]))

    def index_of_feature(self, f):
        offsets = self.offsets
        for seg, (layer, n) in enumerate(self.segments):
            if layer == f.layer:
                if not 0 <= f.filter < n:
                    raise IndexError(f"{f}: filter out of range for layer with {n} filters")
                return int(offsets[seg] + f.filter)
        raise IndexError(f"layer {f.layer} is not part of the descriptor")

    def restrict(self, kinds, net):
        """Sub-layout keeping only layers of the given kinds, plus the row indices it keeps."""
        rows, segs = [], []
        offsets = self.offsets
        for seg, (layer, n) in enumerate(self.segments):
            if net.layers[layer].kind in kinds:
                segs.append((layer, n))
                rows.extend(range(offsets[seg], offsets[seg] + n))
        return Layout(tuple(segs)), np.asarray(rows, dtype=int)


def layout_of(net):
    return Layout(tuple((p, net.layers[p].units) for p in net.feature_layers))


def feature_of_index(layout, k):
    return layout.feature_of_index(k)


def _layer_norms(out):
    """Per-channel L2 norms for a batch: (n, c, h, w) or (n, units) -> (n, c), float64."""
    a = out.astype(np.float64).reshape(out.shape[0], out.shape[1], -1)
    return np.sqrt(np.einsum("ncp,ncp->nc", a, a))


def _l1_normalize(v):
    s = v.sum(axis=1, keepdims=True)
    return np.divide(v, s, out=np.zeros_like(v), where=s > 0)


def descriptors_from_trace(trace, net, rectified=True):
    """(n, m) descriptor rows for every image in a captured trace."""
    if not trace.captured:
        raise ValueError("trace has no captured activations; run forward with capture=True")
    parts = []
    for p in net.feature_layers:
        out = trace.outputs[net.response_layer(p, rectified)]
        parts.append(_l1_normalize(_layer_norms(out)))
    return np.concatenate(parts, axis=1)


def extract_descriptor(trace, net, rectified=True):
    """Descriptor of a single-image trace: a length-m nonnegative vector."""
    return descriptors_from_trace(trace, net, rectified)[0]


@dataclass
class DatasetMatrices:
    X: np.ndarray  # (m, N)
    L: np.ndarray  # (C, N)
    layout: Layout

    def __post_init__(self):
        if self.X.ndim != 2 or self.L.ndim != 2 or self.X.shape[1] != self.L.shape[1]:
            raise ValueError(f"inconsistent shapes X{self.X.shape} L{self.L.shape}")

    @property
    def labels(self):
        return self.L.argmax(axis=0)

    def dump(self, path):
        m, n = self.X.shape
        with open(path, "w") as fh:
            fh.write(f"{m} {n} {self.L.shape[0]}\n")
            for row in self.X:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            for row in self.L:
                fh.write(" ".join(str(int(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path, layout):
        from .data import DataFormatError

        with open(path) as fh:
            try:
                m, n, c = (int(t) for t in fh.readline().split())
                vals = np.array(fh.read().split(), dtype=np.float64)
            except ValueError as exc:
                raise DataFormatError(f"{path}: {exc}") from exc
        if vals.size != (m + c) * n:
            raise DataFormatError(f"{path}: expected {(m + c) * n} values, found {vals.size}")
        return cls(vals[: m * n].reshape(m, n), vals[m * n:].reshape(c, n), layout)


def one_hot(labels, classes):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels must lie in [0, {classes})")
    L = np.zeros((classes, labels.size))
    L[labels, np.arange(labels.size)] = 1.0
    return L


def build_matrices(net, images, labels, batch_size=128, rectified=True):
    if len(images) == 0:
        raise ValueError("cannot build matrices from an empty dataset")
    L = one_hot(labels, net.class_count)
    cols = []
    for start in range(0, len(images), batch_size):
        trace = forward(net, images[start:start + batch_size], capture=True)
        cols.append(descriptors_from_trace(trace, net, rectified))
    X = np.concatenate(cols, axis=0).T
    return DatasetMatrices(np.ascontiguousarray(X), L, layout_of(net))
