"""Test-time explanations (predict, score relevant features, render heatmaps)
and training-time average-patch visualisations."""
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .deconv import Heatmap, feature_heatmap
from .descriptor import descriptors_from_trace, extract_descriptor, layout_of
from .network import FeatureId, forward


@dataclass
class Explanation:
    predicted_class: int
    confidence: float
    items: list  # (FeatureId, response r, weight, Heatmap)
    k: int
    flagged: bool = False
    note: str = ""

    @property
    def features(self):
        return [it[0] for it in self.items]

    @property
    def responses(self):
        return [it[1] for it in self.items]

    def combined(self, side):
        """Pixelwise max over the feature heatmaps (zeros when there are none)."""
        if not self.items:
            return np.zeros((side, side))
        return np.max([it[3].values for it in self.items], axis=0)


def rank_features(w, x, layout, k, conv_only_layers=None):
    """Top-k nonzero entries of ``w * x``: r descending, then (layer, filter) ascending.

    Returns (list of (FeatureId, r, weight), flagged) where ``flagged`` marks k > nnz.
    """
    r = w * x
    cand = []
    for idx in np.nonzero(w)[0]:
        f = layout.feature_of_index(int(idx))
        if conv_only_layers is not None and f.layer not in conv_only_layers:
            continue
        cand.append((f, float(r[idx]), float(w[idx])))
    cand.sort(key=lambda t: (-t[1], t[0].layer, t[0].filter))
    return cand[:k], k > len(cand)


def explain_image(net, W, image, k=3, mode="ours", policy=None, trace=None):
    """Predict, weight the descriptor by the predicted class column, render top-k heatmaps.

    In ``upsampled_activation`` mode fc features have no activation map, so the
    ranking is restricted to conv features.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    layout = layout_of(net)
    if layout.size != W.m:
        raise ValueError(f"relevance matrix has m={W.m} but the network descriptor has {layout.size}")
    if trace is None:
        trace = forward(net, image, capture=True)
    j = int(trace.predicted[0])
    x = extract_descriptor(trace, net)
    conv_layers = None
    if mode == "upsampled_activation":
        conv_layers = {p for p in net.feature_layers if net.layers[p].kind == "conv"}
    top, flagged = rank_features(W.column(j), x, layout, k, conv_layers)
    items = [(f, r, w, feature_heatmap(net, trace, f, mode, policy)) for f, r, w in top]
    note = ""
    if not items:
        note = "no nonzero relevance weights for the predicted class"
    elif flagged:
        note = f"k={k} exceeds the {len(items)} available features"
    return Explanation(j, float(trace.probs[0, j]), items, k, flagged or not items, note)


def save_bundle(expl, out_dir, class_names=None):
    """Write prediction.txt, feature_<rank>_L<p>F<q>.png (+ sidecars) and manifest.tsv."""
    os.makedirs(out_dir, exist_ok=True)
    label = class_names[expl.predicted_class] if class_names else str(expl.predicted_class)
    with open(os.path.join(out_dir, "prediction.txt"), "w") as fh:
        fh.write(f"{expl.predicted_class}\t{label}\t{expl.confidence!r}\n")
        if expl.flagged:
            fh.write(f"# {expl.note}\n")
    rows = ["rank\tlayer\tfilter\tweight\tresponse\tmode\tfile"]
    for rank, (f, r, w, hm) in enumerate(expl.items):
        name = f"feature_{rank}_L{f.layer}F{f.filter}.png"
        hm.to_png(os.path.join(out_dir, name))
        rows.append(f"{rank}\t{f.layer}\t{f.filter}\t{w!r}\t{r!r}\t{hm.mode}\t{name}")
    with open(os.path.join(out_dir, "manifest.tsv"), "w") as fh:
        fh.write("\n".join(rows) + "\n")


def read_bundle_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.tsv")) as fh:
        head = fh.readline().rstrip("\n").split("\t")
        return [dict(zip(head, line.rstrip("\n").split("\t"))) for line in fh if line.strip()]


@dataclass
class ReceptiveField:
    top: int
    left: int
    bottom: int  # inclusive
    right: int
    nominal_side: int
    nominal_top: int
    nominal_left: int


def receptive_field(net, layer, location=(0, 0)):
    """Input-space rectangle seen by one output cell of ``layer``.

    fc layers (and anything after flatten) see the whole image.
    """
    side = net.input_side
    start, jump, rf = 0, 1, 1
    for i, l in enumerate(net.layers[: layer + 1]):
        if l.kind in ("flatten", "fc", "softmax"):
            return ReceptiveField(0, 0, side - 1, side - 1, side, 0, 0)
        if l.kind == "conv":
            m, s, o = l.spec.kernel, l.spec.stride, l.spec.pad
        elif l.kind == "maxpool":
            m, s, o = l.window, l.stride, 0
        else:
            continue
        start -= o * jump
        rf += (m - 1) * jump
        jump *= s
    y, x = location
    top, left = start + y * jump, start + x * jump
    return ReceptiveField(
        max(top, 0), max(left, 0), min(top + rf - 1, side - 1), min(left + rf - 1, side - 1),
        rf, top, left,
    )


def crop_receptive_field(image, rf):
    """(c, side, side) crop of ``image`` (c, h, w) zero-padded to the nominal field."""
    c = image.shape[0]
    out = np.zeros((c, rf.nominal_side, rf.nominal_side), dtype=np.float64)
    if rf.nominal_side == image.shape[-1] and rf.nominal_top == 0 and rf.nominal_left == 0:
        out[:] = image
        return out
    dy, dx = rf.top - rf.nominal_top, rf.left - rf.nominal_left
    h, w = rf.bottom - rf.top + 1, rf.right - rf.left + 1
    out[:, dy:dy + h, dx:dx + w] = image[:, rf.top:rf.bottom + 1, rf.left:rf.right + 1]
    return out


@dataclass
class AverageVisualization:
    feature: FeatureId
    class_index: int
    mean_patch: np.ndarray  # (c, s, s)
    count: int
    image_indices: list = field(default_factory=list)
    crops: list = field(default_factory=list)

    def to_png(self, path):
        patch = np.clip(self.mean_patch, 0, 1)
        arr = np.round(255 * patch.transpose(1, 2, 0)).astype(np.uint8)
        if arr.shape[2] == 1:
            Image.fromarray(arr[..., 0], mode="L").save(path)
        else:
            Image.fromarray(arr, mode="RGB").save(path)


def average_visualization(net, W, j, images, labels=None, top_n=100, class_restricted=True,
                          rank_by="descriptor", keep_crops=False, batch_size=128):
    """Mean receptive-field patch at the strongest location, over the top_n responding images,
    for every relevant feature of class ``j``."""
    from .selector import relevant_features

    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    layout = layout_of(net)
    pool = np.arange(len(images))
    if class_restricted and labels is not None:
        pool = pool[np.asarray(labels) == j]
    desc = []
    for start in range(0, len(pool), batch_size):
        tr = forward(net, images[pool[start:start + batch_size]], capture=True)
        desc.append(descriptors_from_trace(tr, net))
    desc = np.concatenate(desc) if desc else np.zeros((0, layout.size))
    out = []
    for f, _ in relevant_features(W, j, layout):
        if rank_by == "descriptor":
            scores = desc[:, layout.index_of_feature(f)]
        else:
            scores = _raw_scores(net, images[pool], f, batch_size)
        order = np.argsort(-scores, kind="stable")[:top_n]
        chosen = pool[order]
        total = None
        crops = []
        for idx in chosen:
            tr = forward(net, images[idx:idx + 1], capture=True)
            act = tr.outputs[net.response_layer(f.layer)][0, f.filter]
            if act.ndim == 2:
                y, x = np.unravel_index(int(np.argmax(act)), act.shape)  # row-major first max
            else:
                y, x = 0, 0
            crop = crop_receptive_field(images[idx], receptive_field(net, f.layer, (y, x)))
            total = crop.copy() if total is None else total + crop
            if keep_crops:
                crops.append(crop)
        count = len(chosen)
        mean = total / count if count else None
        out.append(AverageVisualization(f, j, mean, count, [int(i) for i in chosen], crops))
    return out


def _raw_scores(net, images, f, batch_size):
    scores = []
    for start in range(0, len(images), batch_size):
        tr = forward(net, images[start:start + batch_size], capture=True)
        act = tr.outputs[net.response_layer(f.layer)][:, f.filter]
        scores.append(act.reshape(len(act), -1).max(axis=1))
    return np.concatenate(scores) if scores else np.zeros(0)
