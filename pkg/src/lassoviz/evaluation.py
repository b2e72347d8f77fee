"""Quantitative protocols: feature ablation, IoU-AUC against ground-truth masks,
heatmap-guided occlusion, class-sensitivity sanity check, reconstruction mean-AUC."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .descriptor import layout_of
from .explain import explain_image, rank_features
from .network import accuracy, forward, zero_filters
from .rng import substream
from .selector import solve_mu_lasso, RelevanceMatrix

CONDITIONS = ("All", "OnlyConv", "Random", "Original")
DEFAULT_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(1, 20))


# --- ablation ----------------------------------------------------------------

@dataclass
class AblationCurve:
    schedule: list
    accuracy: list
    condition: str
    std: list = field(default_factory=list)


def features_by_relevance(W, layout):
    """Support of W ordered by max |weight| over classes, ties by (layer, filter)."""
    D = np.abs(W.dense())
    best = D.max(axis=1)
    idx = [k for k in range(W.m) if best[k] > 0]
    feats = [(layout.feature_of_index(k), best[k]) for k in idx]
    feats.sort(key=lambda t: (-t[1], t[0].layer, t[0].filter))
    return [f for f, _ in feats]


def layer_pool(net, kinds=("conv", "fc")):
    """Every (layer, filter) of the descriptor layers of the given kinds."""
    from .network import FeatureId

    return [FeatureId(p, q) for p in net.feature_layers if net.layers[p].kind in kinds
            for q in range(net.layers[p].units)]


def ablation_curve(net, features, images, labels, schedule, condition="All", pool=None,
                   seeds=5, seed=0):
    schedule = list(schedule)
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be non-decreasing")
    base = accuracy(net, images, labels)
    accs, stds = [], []
    if condition == "Original":
        return AblationCurve(schedule, [base] * len(schedule), condition, [0.0] * len(schedule))
    if condition == "Random":
        if pool is None:
            raise ValueError("Random condition needs a feature pool")
        for n in schedule:
            if n > len(pool):
                raise ValueError(f"cannot draw {n} features from a pool of {len(pool)}")
            runs = []
            for s in range(seeds):
                rng = substream(seed, "random-ablation", n, s)
                pick = rng.choice(len(pool), size=n, replace=False)
                runs.append(accuracy(zero_filters(net, [pool[i] for i in pick]), images, labels) if n else base)
            accs.append(float(np.mean(runs)))
            stds.append(float(np.std(runs)))
        return AblationCurve(schedule, accs, condition, stds)
    features = list(features)
    for n in schedule:
        if n > len(features):
            raise ValueError(f"cannot remove {n} of {len(features)} features")
        accs.append(accuracy(zero_filters(net, features[:n]), images, labels) if n else base)
        stds.append(0.0)
    return AblationCurve(schedule, accs, condition, stds)


def only_conv_selection(mats, mu, net, opts=None):
    """Solve the mu-lasso on conv rows only; returns (W over the full layout, selected features)."""
    sub_layout, rows = mats.layout.restrict(("conv",), net)
    from .descriptor import DatasetMatrices

    sub = DatasetMatrices(mats.X[rows], mats.L, sub_layout)
    W_sub, _ = solve_mu_lasso(sub, mu, opts)
    D = np.zeros((mats.X.shape[0], mats.L.shape[0]))
    D[rows] = W_sub.dense()
    W_full = RelevanceMatrix.from_dense(D, mu)
    return W_full, features_by_relevance(W_full, mats.layout)


# --- IoU ---------------------------------------------------------------------

def iou(a, b):
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def iou_curve(heatmap, mask, thresholds=DEFAULT_THRESHOLDS):
    h = np.asarray(heatmap)
    mask = np.asarray(mask, dtype=bool)
    return np.array([iou(h >= t, mask) for t in thresholds])


def auc_percent(values, thresholds=DEFAULT_THRESHOLDS):
    """Trapezoidal area under an IoU-vs-threshold curve, normalised to the sweep width, in percent."""
    t = np.asarray(thresholds, dtype=np.float64)
    if t.size < 2:
        return 100.0 * float(np.mean(values))
    return 100.0 * float(np.trapezoid(values, t) / (t[-1] - t[0]))


@dataclass
class IoUResult:
    thresholds: tuple
    mean_iou: np.ndarray
    auc: float
    fold: int = -1
    mode: str = "ours"
    n_images: int = 0
    excluded: int = 0


def explanation_heatmap(net, W, image, mode="ours", k=3, trace=None):
    side = net.input_side
    expl = explain_image(net, W, image, k, mode, trace=trace)
    return expl.combined(side), expl


def iou_auc(net, W, images, masks, mode="ours", thresholds=DEFAULT_THRESHOLDS, k=3, fold=-1,
            traces=None):
    curves = []
    excluded = 0
    for i in range(len(images)):
        if not np.any(masks[i]):
            excluded += 1
            continue
        tr = None if traces is None else traces[i]
        h, _ = explanation_heatmap(net, W, images[i:i + 1], mode, k, trace=tr)
        curves.append(iou_curve(h, masks[i], thresholds))
    mean = np.mean(curves, axis=0) if curves else np.zeros(len(thresholds))
    return IoUResult(tuple(thresholds), mean, auc_percent(mean, thresholds), fold, mode,
                     len(curves), excluded)


# --- occlusion ---------------------------------------------------------------

@dataclass
class OcclusionCurve:
    coverage: list
    confidence: list
    predicted_class: int
    patches: list

    @property
    def deltas(self):
        return [self.confidence[0] - c for c in self.confidence]

    @property
    def final_drop(self):
        return self.confidence[0] - self.confidence[-1]


def _box_sum(a, p):
    c = np.pad(np.cumsum(np.cumsum(a, axis=0), axis=1), ((1, 0), (1, 0)))
    return c[p:, p:] - c[:-p, p:] - c[p:, :-p] + c[:-p, :-p]


def occlusion_patches(heatmap, patch, max_coverage=0.30, strategy="greedy", rng=None,
                      n_patches=None):
    """Non-overlapping patch corners, placed until coverage reaches ``max_coverage``.

    ``greedy`` takes the position with the most remaining heatmap mass (row-major
    first on ties); ``random`` draws uniformly among valid positions; ``sampled``
    draws proportionally to remaining mass.
    """
    h = np.asarray(heatmap, dtype=np.float64)
    side = h.shape[0]
    if patch > side:
        raise ValueError(f"patch side {patch} larger than image side {side}")
    occupied = np.zeros_like(h)
    placed = []
    total = h.size
    while (n_patches is None and occupied.sum() / total < max_coverage) or \
            (n_patches is not None and len(placed) < n_patches):
        free = _box_sum(occupied, patch) == 0
        if not free.any():
            break
        if strategy == "greedy":
            mass = np.where(free, _box_sum(h * (1 - occupied), patch), -np.inf)
            y, x = np.unravel_index(int(np.argmax(mass)), mass.shape)
        elif strategy == "random":
            cand = np.flatnonzero(free)
            y, x = np.unravel_index(int(cand[rng.integers(cand.size)]), free.shape)
        elif strategy == "sampled":
            mass = np.where(free, _box_sum(h * (1 - occupied), patch), 0.0)
            p = mass.ravel() + 1e-12 * free.ravel()
            k = rng.choice(p.size, p=p / p.sum())
            y, x = np.unravel_index(int(k), mass.shape)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        occupied[y:y + patch, x:x + patch] = 1
        placed.append((int(y), int(x)))
    return placed, occupied.sum() / total


def occlusion_study(net, heatmap, image, patch=None, max_coverage=0.30, strategy="greedy",
                    rng=None, fill=0.5):
    """Confidence of the originally predicted class as patches are added."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 3:
        image = image[None]
    side = image.shape[-1]
    patch = patch or math.ceil(side / 8)
    if np.asarray(heatmap).shape != (side, side):
        raise ValueError("heatmap must match the image side")
    placed, _ = occlusion_patches(heatmap, patch, max_coverage, strategy, rng)
    frames = [image[0]]
    cur = image[0].copy()
    covered = np.zeros((side, side), dtype=bool)
    coverage = [0.0]
    for y, x in placed:
        cur = cur.copy()
        cur[:, y:y + patch, x:x + patch] = fill
        covered[y:y + patch, x:x + patch] = True
        frames.append(cur)
        coverage.append(float(covered.mean()))
    probs = forward(net, np.stack(frames), capture=False).probs
    j = int(probs[0].argmax())
    return OcclusionCurve(coverage, [float(p[j]) for p in probs], j, placed)


# --- sanity check ------------------------------------------------------------

def pearson_dissimilarity(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0 if np.array_equal(a, b) else 1.0
    return float(1.0 - np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def class_heatmap(net, W, trace, j, k=3, mode="ours"):
    """Explanation heatmap forcing class ``j`` instead of the prediction (None if w_j is empty)."""
    from .deconv import feature_heatmap
    from .descriptor import extract_descriptor

    layout = layout_of(net)
    x = extract_descriptor(trace, net)
    top, _ = rank_features(W.column(j), x, layout, k)
    if not top:
        return None
    return np.max([feature_heatmap(net, trace, f, mode).values for f, _, _ in top], axis=0)


@dataclass
class SanityResult:
    classes: list
    heatmaps: list
    dissimilarity: np.ndarray
    missing: list
    predicted_class: int


def sanity_check(net, W, image, classes=None, k=3, mode="ours"):
    trace = forward(net, image, capture=True)
    j_hat = int(trace.predicted[0])
    classes = list(range(W.C)) if classes is None else list(classes)
    if j_hat not in classes:
        raise ValueError(f"class set must include the predicted class {j_hat}")
    maps = [class_heatmap(net, W, trace, j, k, mode) for j in classes]
    n = len(classes)
    D = np.full((n, n), np.nan)
    for a in range(n):
        for b in range(n):
            if maps[a] is not None and maps[b] is not None:
                D[a, b] = pearson_dissimilarity(maps[a], maps[b])
    missing = [c for c, m in zip(classes, maps) if m is None]
    return SanityResult(classes, maps, D, missing, j_hat)


def shift_overlap(a, b, dy, dx):
    """Overlapping windows of ``a`` and ``b`` where a[y, x] corresponds to b[y + dy, x + dx]."""
    n, m = a.shape
    ys, ye = max(0, -dy), min(n, n - dy)
    xs, xe = max(0, -dx), min(m, m - dx)
    return a[ys:ye, xs:xe], b[ys + dy:ye + dy, xs + dx:xe + dx]


# --- reconstruction ----------------------------------------------------------

def roc_auc(scores, labels):
    """Area under the ROC curve via the rank-sum statistic (ties get average ranks)."""
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both positives and negatives")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class ReconstructionResult:
    mean_auc: float
    per_class: dict
    skipped: list


def reconstruction_auc(mats, W):
    scores = mats.X.T @ W.dense()
    per_class, skipped = {}, []
    for j in range(mats.L.shape[0]):
        lab = mats.L[j] > 0.5
        if lab.all() or not lab.any():
            skipped.append(j)
            continue
        per_class[j] = roc_auc(scores[:, j], lab)
    mean = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    return ReconstructionResult(mean, per_class, skipped)


# --- study drivers -----------------------------------------------------------

@dataclass
class OcclusionComparison:
    guided_drop: np.ndarray  # per image
    random_drop: np.ndarray  # per image, mean over seeds
    seeds: int
    t_stat: float
    p_value: float

    @property
    def significant(self):
        return self.p_value < 0.05 and self.guided_drop.mean() > self.random_drop.mean()


def occlusion_comparison(net, W, images, mode="ours", k=3, seeds=5, seed=0, max_coverage=0.30,
                         patch=None):
    """Heatmap-guided vs uniform-random placement; one-sided paired t-test on the final drops."""
    from scipy.stats import ttest_rel

    guided, rand = [], []
    for i in range(len(images)):
        img = images[i:i + 1]
        h, _ = explanation_heatmap(net, W, img, mode, k)
        guided.append(occlusion_study(net, h, img, patch, max_coverage).final_drop)
        runs = [occlusion_study(net, h, img, patch, max_coverage, "random",
                                substream(seed, "occlusion", i, s)).final_drop for s in range(seeds)]
        rand.append(float(np.mean(runs)))
    guided, rand = np.array(guided), np.array(rand)
    if np.allclose(guided, rand):
        t, p = 0.0, 1.0
    else:
        res = ttest_rel(guided, rand, alternative="greater")
        t, p = float(res.statistic), float(res.pvalue)
    return OcclusionComparison(guided, rand, seeds, t, p)


@dataclass
class SanityStudy:
    cross: np.ndarray  # per image: mean dissimilarity between classes
    same: np.ndarray  # per image: aligned dissimilarity to another crop of the frame
    missing: list


def sanity_study(net, W, spec, ds, n_images=20, k=3, mode="ours", crop_partner=None):
    """Cross-class vs same-class heatmap dissimilarity over the first ``n_images`` of ``ds``.

    The same-class partner is another crop of the same frame and rotation (the
    centre crop, or crop 0 for the centre itself), aligned before comparison.
    """
    from . import flowergen

    cross, same, missing = [], [], set()
    for i in range(min(n_images, len(ds))):
        meta = ds.meta[i]
        img = ds.images[i:i + 1]
        res = sanity_check(net, W, img, None, k, mode)
        missing.update(res.missing)
        D = res.dissimilarity
        off = D[~np.eye(len(D), dtype=bool)]
        cross.append(float(np.nanmean(off)))
        crop = 4 if meta["replaced"] else meta["crop"]
        partner = crop_partner if crop_partner is not None else (0 if crop == 4 else 4)
        s = flowergen.render_sample(spec, meta["label"], meta["frame"], partner, meta["angle"])
        other = np.ascontiguousarray(s.image.transpose(2, 0, 1)[None], dtype=np.float32) / 255.0
        j = res.predicted_class
        h_self = res.heatmaps[res.classes.index(j)]
        h_other = class_heatmap(net, W, forward(net, other, capture=True), j, k, mode)
        if h_self is None or h_other is None:
            continue
        dy, dx = flowergen.crop_shift(spec, crop, partner, meta["angle"])
        a, b = shift_overlap(h_self, h_other, dy, dx)
        same.append(pearson_dissimilarity(a, b))
    return SanityStudy(np.array(cross), np.array(same), sorted(missing))


# --- result files ------------------------------------------------------------

def result_name(kind, dataset, variant, mode, mu, k, seed, ext="tsv"):
    return f"{kind}_{dataset}_{variant}_{mode}_mu{mu:g}_k{k}_seed{seed}.{ext}"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header, rows, sep="\t"):
    with open(path, "w") as fh:
        fh.write(sep.join(header) + "\n")
        for row in rows:
            fh.write(sep.join(_fmt(v) for v in row) + "\n")


def read_table(path, sep="\t"):
    with open(path) as fh:
        head = fh.readline().rstrip("\n").split(sep)
        return [dict(zip(head, line.rstrip("\n").split(sep))) for line in fh if line.strip()]


def mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())
