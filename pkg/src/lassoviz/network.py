"""Small sequential CNNs: forward with activation capture, SGD training,
filter ablation and a binary model format."""
import copy
import io
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    ConvSpec,
    NonFiniteError,
    ShapeError,
    conv2d,
    conv2d_grads,
    maxpool2d,
    out_side,
    softmax,
    unpool2d,
)
from .rng import substream

log = logging.getLogger(__name__)

MAGIC = b"LLNET1\n"
BLOB_MARK = b"\0BLOB\0"


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class FeatureId:
    """A (layer index, filter index) pair addressing one conv channel or fc unit."""

    layer: int
    filter: int

    def __str__(self):
        return f"L{self.layer}F{self.filter}"


@dataclass(eq=False)
class Conv:
    spec: ConvSpec
    weight: np.ndarray
    bias: np.ndarray
    kind: str = field(default="conv", init=False)

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float32)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)

    @property
    def units(self):
        return self.spec.out_channels


@dataclass(eq=False)
class FC:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray
    kind: str = field(default="fc", init=False)

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float32)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)

    @property
    def units(self):
        return self.weight.shape[0]


@dataclass(eq=False)
class MaxPool:
    window: int
    stride: int
    kind: str = field(default="maxpool", init=False)


@dataclass(eq=False)
class ReLU:
    kind: str = field(default="relu", init=False)


@dataclass(eq=False)
class Flatten:
    kind: str = field(default="flatten", init=False)


@dataclass(eq=False)
class Softmax:
    kind: str = field(default="softmax", init=False)


PARAMETRIC = ("conv", "fc")


@dataclass(eq=False)
class Network:
    layers: list
    input_side: int
    in_channels: int
    class_count: int
    classifier_tail_len: int = 2

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.layers or self.layers[-1].kind != "softmax":
            raise ShapeError("the final layer must be softmax")
        fcs = [l for l in self.layers if l.kind == "fc"]
        if self.layers[-2].kind != "fc" or fcs[-1].units != self.class_count:
            raise ShapeError("softmax must be preceded by an fc layer with class_count outputs")
        if self.classifier_tail_len < 1 or self.classifier_tail_len > len(self.layers):
            raise ShapeError(f"classifier_tail_len {self.classifier_tail_len} out of range")
        self.shapes()

    def shapes(self):
        """Per-layer output shapes (without batch), checked against the shape law."""
        shape = (self.in_channels, self.input_side, self.input_side)
        out = []
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv":
                if len(shape) != 3 or shape[0] != layer.spec.in_channels:
                    raise ShapeError(f"layer {i}: conv expects {layer.spec.in_channels} channels, got {shape}")
                side = layer.spec.out_side(shape[1])
                shape = (layer.spec.out_channels, side, side)
            elif layer.kind == "maxpool":
                side = out_side(shape[1], layer.window, layer.stride)
                shape = (shape[0], side, side)
            elif layer.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif layer.kind == "fc":
                if len(shape) != 1 or shape[0] != layer.weight.shape[1]:
                    raise ShapeError(f"layer {i}: fc expects {layer.weight.shape[1]} inputs, got {shape}")
                shape = (layer.units,)
            out.append(shape)
        return out

    @property
    def feature_layers(self):
        """Indices of conv/fc layers outside the classifier tail."""
        stop = len(self.layers) - self.classifier_tail_len
        return [i for i, l in enumerate(self.layers[:stop]) if l.kind in PARAMETRIC]

    def response_layer(self, p, rectified=True):
        """Index of the layer whose output is read as the response of layer ``p``."""
        if rectified and p + 1 < len(self.layers) and self.layers[p + 1].kind == "relu":
            return p + 1
        return p

    def check_feature(self, f):
        if not 0 <= f.layer < len(self.layers) or self.layers[f.layer].kind not in PARAMETRIC:
            raise ValueError(f"{f} does not address a conv or fc layer")
        if not 0 <= f.filter < self.layers[f.layer].units:
            raise ValueError(f"{f}: filter index out of range (layer has {self.layers[f.layer].units})")

    def copy(self):
        return copy.deepcopy(self)


@dataclass
class Trace:
    """Per-layer outputs for a batch (``outputs[i]`` is layer i's output)."""

    inputs: np.ndarray
    outputs: list
    switches: dict
    logits: np.ndarray
    probs: np.ndarray

    @property
    def predicted(self):
        return self.probs.argmax(axis=1)  # lowest index wins ties

    @property
    def captured(self):
        return bool(self.outputs)

    def image(self, i):
        """Single-image view of a batched trace."""
        return Trace(
            self.inputs[i:i + 1],
            [o[i:i + 1] for o in self.outputs],
            {k: v[i:i + 1] for k, v in self.switches.items()},
            self.logits[i:i + 1],
            self.probs[i:i + 1],
        )


def forward(net, images, capture=True):
    x = np.asarray(images, dtype=np.float32)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != (net.in_channels, net.input_side, net.input_side):
        raise ShapeError(
            f"network expects images of shape {(net.in_channels, net.input_side, net.input_side)}, got {x.shape[1:]}"
        )
    inputs = x
    outputs, switches = [], {}
    logits = None
    for i, layer in enumerate(net.layers):
        kind = layer.kind
        if kind == "conv":
            x = conv2d(x, layer.weight, layer.bias, layer.spec)
        elif kind == "relu":
            x = np.maximum(x, 0)
        elif kind == "maxpool":
            x, sw = maxpool2d(x, layer.window, layer.stride)
            if capture:
                switches[i] = sw
        elif kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif kind == "fc":
            x = x @ layer.weight.T + layer.bias
        elif kind == "softmax":
            logits = x
            x = softmax(x)
        if capture:
            outputs.append(x)
    return Trace(inputs, outputs, switches, logits, x)


def predict(net, images, batch_size=256):
    preds = []
    for start in range(0, len(images), batch_size):
        preds.append(forward(net, images[start:start + batch_size], capture=False).predicted)
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def accuracy(net, images, labels, batch_size=256):
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(predict(net, images, batch_size) == np.asarray(labels)))


def _backward(net, trace, grad_logits):
    """Gradients of the loss for every parametric layer, given d(loss)/d(logits)."""
    grads = {}
    g = grad_logits.astype(np.float32)
    n_layers = len(net.layers)
    for i in range(n_layers - 2, -1, -1):
        layer = net.layers[i]
        x_in = trace.inputs if i == 0 else trace.outputs[i - 1]
        kind = layer.kind
        if kind == "fc":
            grads[i] = (g.T @ x_in, g.sum(axis=0))
            if i:
                g = g @ layer.weight
        elif kind == "relu":
            g = g * (x_in > 0)
        elif kind == "flatten":
            g = g.reshape(x_in.shape)
        elif kind == "maxpool":
            g = unpool2d(g, trace.switches[i], x_in.shape[2])
        elif kind == "conv":
            gx, gw, gb = conv2d_grads(x_in, layer.weight, g, layer.spec)
            grads[i] = (gw, gb)
            g = gx
    return grads


@dataclass
class Hyperparams:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_step: int = 0  # epochs between decays; 0 disables
    lr_gamma: float = 0.5
    target_train_accuracy: float | None = None


def train(net, images, labels, hp=None, seed=0, callback=None):
    """Mini-batch SGD with momentum on mean cross-entropy. Returns a trained copy."""
    hp = hp or Hyperparams()
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot train on an empty dataset")
    if labels.min() < 0 or labels.max() >= net.class_count:
        raise ValueError(f"labels must lie in [0, {net.class_count})")
    net = net.copy()
    rng = substream(seed, "train")
    velocity = {
        i: (np.zeros_like(l.weight), np.zeros_like(l.bias))
        for i, l in enumerate(net.layers)
        if l.kind in PARAMETRIC
    }
    n = len(labels)
    lr = hp.lr
    history = []
    for epoch in range(hp.epochs):
        if hp.lr_step and epoch and epoch % hp.lr_step == 0:
            lr *= hp.lr_gamma
        order = rng.permutation(n)
        correct = 0
        loss_sum = 0.0
        for start in range(0, n, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            loss, hits = sgd_step(net, images[idx], labels[idx], lr, hp, velocity)
            loss_sum += loss * len(idx)
            correct += hits
        train_acc = correct / n
        if not np.isfinite(loss_sum):
            raise NonFiniteError(f"training diverged at epoch {epoch + 1} (loss {loss_sum / n})")
        history.append((loss_sum / n, train_acc))
        log.info("epoch %d loss %.4f train-acc %.4f", epoch + 1, loss_sum / n, train_acc)
        if callback is not None:
            callback(epoch, net)
        if hp.target_train_accuracy is not None and train_acc >= hp.target_train_accuracy:
            break
    net.history = history
    return net


def sgd_step(net, xb, yb, lr, hp, velocity):
    trace = forward(net, xb, capture=True)
    probs = trace.probs
    m = len(yb)
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(m), yb], 1e-12))))
    hits = int(np.sum(probs.argmax(axis=1) == yb))
    grad = probs.copy()
    grad[np.arange(m), yb] -= 1.0
    grad /= m
    grads = _backward(net, trace, grad)
    for i, (gw, gb) in grads.items():
        layer = net.layers[i]
        if hp.weight_decay:
            gw = gw + hp.weight_decay * layer.weight
        vw, vb = velocity[i]
        vw *= hp.momentum
        vw -= lr * gw.astype(np.float32)
        vb *= hp.momentum
        vb -= lr * gb.astype(np.float32)
        layer.weight += vw
        layer.bias += vb
    return loss, hits


def zero_filters(net, features):
    """Copy of ``net`` with each listed filter's weights and bias set to zero."""
    features = list(features)
    for f in features:
        net.check_feature(f)
    out = net.copy()
    for f in features:
        layer = out.layers[f.layer]
        layer.weight[f.filter] = 0
        layer.bias[f.filter] = 0
    return out


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def conv_layer(rng, cin, cout, kernel, stride=1, pad=0):
    spec = ConvSpec(kernel, stride, pad, cin, cout)
    w = _glorot(rng, (cout, cin, kernel, kernel), cin * kernel * kernel, cout * kernel * kernel)
    return Conv(spec, w, np.zeros(cout, dtype=np.float32))


def fc_layer(rng, n_in, n_out):
    return FC(_glorot(rng, (n_out, n_in), n_in, n_out), np.zeros(n_out, dtype=np.float32))


def build_net(input_side, in_channels, class_count, seed=0, conv1=(5, 1, 0), widths=(16, 32, 128),
              tail_len=2):
    """Two conv blocks + two fc layers; ``conv1`` is (kernel, stride, pad) of the first conv."""
    rng = substream(seed, "init")
    k1, s1, o1 = conv1
    c1, c2, hidden = widths
    side = out_side(input_side, k1, s1, o1)
    side = out_side(side, 2, 2)
    side = out_side(side, 5, 1, 0)
    side = out_side(side, 2, 2)
    layers = [
        conv_layer(rng, in_channels, c1, k1, s1, o1),
        ReLU(),
        MaxPool(2, 2),
        conv_layer(rng, c1, c2, 5),
        ReLU(),
        MaxPool(2, 2),
        Flatten(),
        fc_layer(rng, c2 * side * side, hidden),
        ReLU(),
        fc_layer(rng, hidden, class_count),
        Softmax(),
    ]
    return Network(layers, input_side, in_channels, class_count, tail_len)


def mnist_net(seed=0, class_count=10):
    return build_net(28, 1, class_count, seed)


def flower_net(class_count, seed=0, input_side=64):
    # even input side: a stride-2 first conv tiles exactly only with an even kernel
    return build_net(input_side, 3, class_count, seed, conv1=(4, 2, 1))


# --- serialization -------------------------------------------------------

def _header_lines(net):
    lines = [f"net input_side={net.input_side} in_channels={net.in_channels} "
             f"classes={net.class_count} tail={net.classifier_tail_len}"]
    for layer in net.layers:
        if layer.kind == "conv":
            s = layer.spec
            lines.append(f"conv in={s.in_channels} out={s.out_channels} kernel={s.kernel} stride={s.stride} pad={s.pad}")
        elif layer.kind == "fc":
            lines.append(f"fc in={layer.weight.shape[1]} out={layer.weight.shape[0]}")
        elif layer.kind == "maxpool":
            lines.append(f"maxpool window={layer.window} stride={layer.stride}")
        else:
            lines.append(layer.kind)
    return lines


def model_bytes(net):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(("\n".join(_header_lines(net)) + "\n").encode("utf-8"))
    buf.write(BLOB_MARK)
    for layer in net.layers:
        if layer.kind in PARAMETRIC:
            for arr in (layer.weight, layer.bias):
                data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
                buf.write(struct.pack("<Q", arr.size))
                buf.write(data)
    return buf.getvalue()


def save_model(net, path):
    with open(path, "wb") as fh:
        fh.write(model_bytes(net))


def _kv(tokens):
    return {k: int(v) for k, v in (t.split("=", 1) for t in tokens)}


def parse_model(data):
    if not data.startswith(MAGIC):
        raise ModelFormatError(f"offset 0: bad magic {data[:len(MAGIC)]!r}")
    end = data.find(BLOB_MARK, len(MAGIC))
    if end < 0:
        raise ModelFormatError(f"offset {len(MAGIC)}: blob marker not found")
    try:
        lines = data[len(MAGIC):end].decode("utf-8").splitlines()
        head = lines[0].split()
        if head[0] != "net":
            raise ValueError("first header line must start with 'net'")
        meta = _kv(head[1:])
        shells = []
        for line in lines[1:]:
            tok = line.split()
            shells.append((tok[0], _kv(tok[1:])))
    except (ValueError, IndexError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"offset {len(MAGIC)}: malformed header ({exc})") from exc

    pos = end + len(BLOB_MARK)

    def blob(expected_count):
        nonlocal pos
        if pos + 8 > len(data):
            raise ModelFormatError(f"offset {pos}: expected 8-byte length prefix, file has {len(data) - pos} bytes left")
        (count,) = struct.unpack_from("<Q", data, pos)
        if count != expected_count:
            raise ModelFormatError(f"offset {pos}: blob holds {count} values, header implies {expected_count}")
        pos += 8
        need = 4 * count
        if pos + need > len(data):
            raise ModelFormatError(
                f"offset {pos}: truncated blob, expected {need} bytes, found {len(data) - pos} "
                f"(file length {len(data)}, expected at least {pos + need})"
            )
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(np.float32)
        pos += need
        return arr

    layers = []
    for kind, kv in shells:
        if kind == "conv":
            spec = ConvSpec(kv["kernel"], kv["stride"], kv["pad"], kv["in"], kv["out"])
            w = blob(spec.out_channels * spec.in_channels * spec.kernel ** 2)
            w = w.reshape(spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
            layers.append(Conv(spec, w, blob(spec.out_channels)))
        elif kind == "fc":
            w = blob(kv["out"] * kv["in"]).reshape(kv["out"], kv["in"])
            layers.append(FC(w, blob(kv["out"])))
        elif kind == "maxpool":
            layers.append(MaxPool(kv["window"], kv["stride"]))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "softmax":
            layers.append(Softmax())
        else:
            raise ModelFormatError(f"unknown layer kind {kind!r}")
    if pos != len(data):
        raise ModelFormatError(f"offset {pos}: {len(data) - pos} trailing bytes")
    return Network(layers, meta["input_side"], meta["in_channels"], meta["classes"], meta["tail"])


def load_model(path):
    with open(path, "rb") as fh:
        return parse_model(fh.read())
