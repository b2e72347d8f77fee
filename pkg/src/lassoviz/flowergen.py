"""Procedural 2D "an8Flower"-style benchmark with exact ground-truth masks.

A flower is a curved stem with two leaves and a petal rosette head. One part
(head colour, stem colour, or a shape feature) defines the class; everything
else is painted in fixed neutral colours, so the mask of that part is exactly
the discriminative region.
"""
import hashlib
import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np
from PIL import Image
from scipy import ndimage

from .rng import substream

GENERATOR_VERSION = "flowergen-1"

PALETTE = {
    "red": (0.90, 0.10, 0.10),
    "green": (0.10, 0.85, 0.10),
    "blue": (0.15, 0.20, 0.95),
    "yellow": (0.95, 0.90, 0.10),
    "magenta": (0.90, 0.10, 0.90),
    "cyan": (0.10, 0.90, 0.90),
}
COLOR_NAMES = tuple(PALETTE)
STEM_GREEN = (0.30, 0.50, 0.22)
LEAF_GREEN = (0.25, 0.42, 0.16)
HEAD_GRAY = (0.60, 0.60, 0.60)
PART_ORANGE = (1.00, 0.55, 0.10)

VARIANTS = ("single-6c", "double-12c", "part-2c")
ANGLES = (5, 10, 15, 20, 25)
N_CROPS = 5
N_FOLDS = 5


@dataclass(frozen=True)
class FlowerSpec:
    variant: str = "single-6c"
    raw_side: int = 300
    crop_side: int = 250
    frames: int = 40
    geometry_seed: int = 0
    profile: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not 0 < self.crop_side <= self.raw_side:
            raise ValueError("crop side must lie in (0, raw_side]")

    @property
    def class_names(self):
        if self.variant == "single-6c":
            return list(COLOR_NAMES)
        if self.variant == "double-12c":
            return [f"head_{c}" for c in COLOR_NAMES] + [f"stem_{c}" for c in COLOR_NAMES]
        return ["balls", "thorns"]

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def per_class(self):
        return self.frames * N_CROPS * len(ANGLES)


def mini_profile(spec):
    """Desk-scale profile: 64-pixel samples and 4 frames (100 images) per class."""
    return replace(spec, raw_side=77, crop_side=64, frames=4, profile="mini")


@dataclass
class Sample:
    image: np.ndarray  # (h, w, 3) uint8
    mask: np.ndarray  # (h, w) bool
    label: int
    frame: int
    crop: int = -1
    angle: int = 0
    replaced: bool = False


# --- rendering -----------------------------------------------------------

def _bezier(p0, p1, p2, n):
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2


def _ellipse(yy, xx, cy, cx, a, b, theta):
    """Pixels inside an ellipse with semi-axes a (along theta) and b."""
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(theta), np.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _disk(yy, xx, cy, cx, r):
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _triangle(yy, xx, pts):
    (y0, x0), (y1, x1), (y2, x2) = pts

    def edge(ya, xa, yb, xb):
        return (xx - xa) * (yb - ya) - (yy - ya) * (xb - xa)

    e0, e1, e2 = edge(y0, x0, y1, x1), edge(y1, x1, y2, x2), edge(y2, x2, y0, x0)
    return ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))


def _near_polyline(yy, xx, pts, radius):
    d2 = np.full(yy.shape, np.inf)
    for (py, px) in pts:
        np.minimum(d2, (yy - py) ** 2 + (xx - px) ** 2, out=d2)
    return d2 <= radius * radius


def _geometry(spec, t):
    theta = 2 * np.pi * t / spec.frames
    jitter = substream(spec.geometry_seed, "geometry", t).uniform(-1, 1, size=4)
    head = np.array([0.30 + 0.02 * np.cos(theta), 0.5 + 0.06 * np.sin(theta) + 0.01 * jitter[0]])
    base = np.array([0.86, 0.5])
    ctrl = np.array([0.58, 0.5 + 0.08 * np.sin(theta + 1.0) + 0.01 * jitter[1]])
    return theta, jitter, head, base, ctrl


def render_parts(spec, t):
    """Boolean pixel sets of each flower part before occlusion."""
    n = spec.raw_side
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    yy = (yy + 0.5) / n
    xx = (xx + 0.5) / n
    theta, jitter, head, base, ctrl = _geometry(spec, t)

    stem_pts = _bezier(base, ctrl, head, 120)
    stem = _near_polyline(yy, xx, stem_pts, 0.03)

    leaves = np.zeros_like(stem)
    squash = 0.8 + 0.2 * np.cos(theta)
    for k, (pos, side) in enumerate(((60, -1), (85, 1))):
        ay, ax = stem_pts[pos]
        ang = side * (np.pi / 6 + 0.1 * jitter[2 + k])
        cy = ay - 0.035 * np.sin(abs(ang))
        cx = ax + side * 0.09 * squash
        leaves |= _ellipse(yy, xx, cy, cx, 0.10 * squash, 0.035, -ang if side > 0 else ang)

    head_px = _disk(yy, xx, head[0], head[1], 0.04)
    width = 0.85 + 0.15 * np.cos(theta)
    for k in range(6):
        psi = 2 * np.pi * k / 6 + theta / 2
        cy = head[0] + 0.065 * np.sin(psi)
        cx = head[1] + 0.065 * np.cos(psi)
        head_px |= _ellipse(yy, xx, cy, cx, 0.07 * width, 0.035, psi)

    balls = np.zeros_like(stem)
    thorns = np.zeros_like(stem)
    if spec.variant == "part-2c":
        for k in range(6):
            psi = 2 * np.pi * k / 6 + theta / 3 + np.pi / 6
            balls |= _disk(yy, xx, head[0] + 0.075 * np.sin(psi), head[1] + 0.075 * np.cos(psi), 0.034)
        for k in range(10):
            i = 10 + 16 * (k // 2)
            (py, px), (qy, qx) = stem_pts[i], stem_pts[i + 4]
            ty, tx = qy - py, qx - px
            norm = np.hypot(ty, tx)
            ty, tx = ty / norm, tx / norm
            side = 1 if k % 2 else -1
            ny, nx = -tx * side, ty * side
            half = 0.0325
            tip = (py + 0.03 * ny + 0.075 * ny, px + 0.03 * nx + 0.075 * nx)
            b0 = (py + 0.02 * ny - half * ty, px + 0.02 * nx - half * tx)
            b1 = (py + 0.02 * ny + half * ty, px + 0.02 * nx + half * tx)
            thorns |= _triangle(yy, xx, (b0, b1, tip))

    return {"leaves": leaves, "stem": stem, "thorns": thorns, "head": head_px, "balls": balls}


PAINT_ORDER = ("leaves", "stem", "thorns", "head", "balls")


def _paint_colors(spec, label):
    head, stem = HEAD_GRAY, STEM_GREEN
    present = ["leaves", "stem", "head"]
    if spec.variant == "single-6c":
        head = PALETTE[COLOR_NAMES[label]]
        key = "head"
    elif spec.variant == "double-12c":
        if label < 6:
            head = PALETTE[COLOR_NAMES[label]]
            key = "head"
        else:
            stem = PALETTE[COLOR_NAMES[label - 6]]
            key = "stem"
    else:
        key = ("balls", "thorns")[label]
        present.append(key)
    colors = {"leaves": LEAF_GREEN, "stem": stem, "head": head, "balls": PART_ORANGE, "thorns": PART_ORANGE}
    return colors, key, present


def render_frame(spec, label, t):
    """Deterministic raw frame: (image uint8 HxWx3, mask bool HxW).

    The mask is exactly the set of visible pixels painted with the class-defining part.
    """
    if not 0 <= t < spec.frames:
        raise ValueError(f"frame {t} outside [0, {spec.frames})")
    if not 0 <= label < spec.n_classes:
        raise ValueError(f"class {label} outside [0, {spec.n_classes})")
    shapes = render_parts(spec, t)
    colors, key, present = _paint_colors(spec, label)
    owner = np.full((spec.raw_side, spec.raw_side), -1, dtype=np.int8)
    for k, name in enumerate(PAINT_ORDER):
        if name in present:
            owner[shapes[name]] = k
    img = np.zeros((spec.raw_side, spec.raw_side, 3), dtype=np.uint8)
    for k, name in enumerate(PAINT_ORDER):
        img[owner == k] = np.round(255 * np.asarray(colors[name])).astype(np.uint8)
    return img, owner == PAINT_ORDER.index(key)


# --- augmentation --------------------------------------------------------

def crop_origins(raw_side, crop_side):
    d = raw_side - crop_side
    return [(0, 0), (0, d), (d, 0), (d, d), (d // 2, d // 2)]


def rotate(arr, angle, order):
    """Rotate about the array centre by ``angle`` degrees (counter-clockwise), zero fill."""
    n = arr.shape[0]
    a = np.deg2rad(angle)
    c, s = np.cos(a), np.sin(a)
    # output (y, x) samples input R^-1 (y - ctr, x - ctr) + ctr
    rot = np.array([[c, -s], [s, c]])
    ctr = np.array([(n - 1) / 2.0, (n - 1) / 2.0])
    offset = ctr - rot @ ctr
    if arr.ndim == 2:
        return ndimage.affine_transform(arr, rot, offset=offset, order=order, mode="constant", cval=0)
    chans = [ndimage.affine_transform(arr[..., k], rot, offset=offset, order=order, mode="constant", cval=0)
             for k in range(arr.shape[2])]
    return np.stack(chans, axis=-1)


def augment(spec, image, mask, label, frame):
    """5 crops x 5 rotations of a raw frame."""
    out = []
    origins = crop_origins(spec.raw_side, spec.crop_side)
    cs = spec.crop_side
    for ci, (oy, ox) in enumerate(origins):
        for angle in ANGLES:
            s = _augmented(image, mask, oy, ox, cs, angle)
            replaced = False
            if not s[1].any():
                cy, cx = origins[-1]
                s = _augmented(image, mask, cy, cx, cs, angle)
                replaced = True
            out.append(Sample(s[0], s[1], label, frame, ci, angle, replaced))
    return out


def crop_shift(spec, crop_a, crop_b, angle):
    """Pixel (dy, dx) such that sample (crop_a, angle) at p shows the same scene point
    as sample (crop_b, angle) at p + (dy, dx); both crops share the rotation."""
    origins = crop_origins(spec.raw_side, spec.crop_side)
    d = np.subtract(origins[crop_a], origins[crop_b]).astype(np.float64)
    a = np.deg2rad(angle)
    c, s = np.cos(a), np.sin(a)
    inv = np.array([[c, s], [-s, c]])
    dy, dx = np.rint(inv @ d).astype(int)
    return int(dy), int(dx)


def render_sample(spec, label, frame, crop, angle):
    """One augmented sample, rendered on its own (no empty-mask replacement)."""
    image, mask = render_frame(spec, label, frame)
    oy, ox = crop_origins(spec.raw_side, spec.crop_side)[crop]
    img, msk = _augmented(image, mask, oy, ox, spec.crop_side, angle)
    return Sample(img, msk, label, frame, crop, angle, False)


def _augmented(image, mask, oy, ox, cs, angle):
    img = image[oy:oy + cs, ox:ox + cs].astype(np.float64)
    msk = mask[oy:oy + cs, ox:ox + cs].astype(np.uint8)
    if angle:
        img = rotate(img, angle, order=1)
        msk = rotate(msk, angle, order=0)
    img = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return img, msk.astype(bool)


def iter_samples(spec):
    """All augmented samples, class-major then frame, crop, angle."""
    for label in range(spec.n_classes):
        for t in range(spec.frames):
            image, mask = render_frame(spec, label, t)
            yield from augment(spec, image, mask, label, t)


def assign_folds(labels, seed, n_folds=N_FOLDS):
    """Stratified folds: each class is shuffled with the seed and dealt round-robin."""
    labels = np.asarray(labels)
    folds = np.zeros(labels.size, dtype=int)
    rng = substream(seed, "folds")
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = np.arange(idx.size) % n_folds
    return folds


@dataclass
class DatasetManifest:
    root: str
    variant: str
    class_names: list
    samples: list  # dicts with image, mask, label, frame, crop, angle, replaced, fold
    seed: int
    spec: dict

    def to_json(self):
        return {
            "generator_version": GENERATOR_VERSION,
            "variant": self.variant,
            "seed": self.seed,
            "spec": self.spec,
            "classes": self.class_names,
            "n_folds": N_FOLDS,
            "samples": self.samples,
        }


def sample_name(s):
    return f"img_{s.frame:03d}_{s.crop}_{s.angle:02d}.png"


def generate_dataset(spec, out_dir, seed=0):
    """Render, augment and write a dataset tree plus ``manifest.json``."""
    root = os.path.join(out_dir, spec.variant)
    try:
        os.makedirs(root, exist_ok=True)
        probe = os.path.join(root, ".write-probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise PermissionError(f"cannot write dataset to {root}: {exc}") from exc
    names = spec.class_names
    records = []
    for s in iter_samples(spec):
        cname = names[s.label]
        rel_img = f"{cname}/{sample_name(s)}"
        rel_msk = f"masks/{cname}/{sample_name(s)}"
        for rel in (rel_img, rel_msk):
            os.makedirs(os.path.dirname(os.path.join(root, rel)), exist_ok=True)
        Image.fromarray(s.image, mode="RGB").save(os.path.join(root, rel_img))
        Image.fromarray(s.mask.astype(np.uint8) * 255, mode="L").save(os.path.join(root, rel_msk))
        records.append({
            "image": rel_img, "mask": rel_msk, "label": s.label, "frame": s.frame,
            "crop": s.crop, "angle": s.angle, "replaced": s.replaced,
        })
    folds = assign_folds([r["label"] for r in records], seed)
    for r, f in zip(records, folds):
        r["fold"] = int(f)
    manifest = DatasetManifest(root, spec.variant, names, records, seed, asdict(spec))
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(manifest.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def tree_checksum(root):
    """SHA-256 over every file path and its bytes below ``root`` (sorted)."""
    h = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            h.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()
