"""Dataset ingestion: MNIST IDX files and generated flower trees."""
import gzip
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .tensor import nn_resize

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class DataFormatError(ValueError):
    pass


@dataclass
class LabeledDataset:
    images: np.ndarray  # (n, c, s, s) float32 in [0, 1]
    labels: np.ndarray  # (n,) int
    class_names: list
    masks: np.ndarray | None = None  # (n, s, s) bool
    folds: np.ndarray | None = None
    meta: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DataFormatError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DataFormatError(f"labels must lie in [0, {len(self.class_names)})")

    def __len__(self):
        return len(self.labels)

    @property
    def side(self):
        return self.images.shape[-1]

    @property
    def n_classes(self):
        return len(self.class_names)

    def subset(self, idx):
        idx = np.asarray(idx)
        return LabeledDataset(
            self.images[idx],
            self.labels[idx],
            self.class_names,
            None if self.masks is None else self.masks[idx],
            None if self.folds is None else self.folds[idx],
            [self.meta[i] for i in idx] if self.meta else [],
        )

    def split(self, fold):
        """(train, test) with ``fold`` held out."""
        if self.folds is None:
            raise DataFormatError("dataset has no fold assignment")
        test = np.nonzero(self.folds == fold)[0]
        train = np.nonzero(self.folds != fold)[0]
        return self.subset(train), self.subset(test)


def _open(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _read_header(data, path, magic, ndim):
    need = 4 * (1 + ndim)
    if len(data) < need:
        raise DataFormatError(f"{path}: truncated header at offset {len(data)}, expected {need} bytes")
    got = struct.unpack_from(">I", data, 0)[0]
    if got != magic:
        raise DataFormatError(f"{path}: bad magic 0x{got:08x} at offset 0, expected 0x{magic:08x}")
    return struct.unpack_from(f">{ndim}I", data, 4), need


def read_idx_images(path):
    data = _open(path)
    (count, rows, cols), off = _read_header(data, path, IMAGE_MAGIC, 3)
    expected = off + count * rows * cols
    if len(data) != expected:
        raise DataFormatError(
            f"{path}: length mismatch at offset {min(len(data), expected)}: "
            f"expected {expected} bytes, found {len(data)}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=off).reshape(count, rows, cols)


def read_idx_labels(path):
    data = _open(path)
    (count,), off = _read_header(data, path, LABEL_MAGIC, 1)
    expected = off + count
    if len(data) != expected:
        raise DataFormatError(
            f"{path}: length mismatch at offset {min(len(data), expected)}: "
            f"expected {expected} bytes, found {len(data)}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=off)


def parse_idx(images_path, labels_path, class_names=None):
    """MNIST-style IDX pair -> LabeledDataset with pixels scaled to [0, 1]."""
    imgs = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(imgs) != len(labels):
        raise DataFormatError(f"image count {len(imgs)} != label count {len(labels)}")
    names = class_names or [str(i) for i in range(max(10, int(labels.max()) + 1 if labels.size else 10))]
    x = (imgs.astype(np.float32) / 255.0)[:, None]
    return LabeledDataset(x, labels.astype(np.int64), names)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def load_mnist(directory, split="train"):
    img, lab = MNIST_FILES[split]
    for suffix in ("", ".gz"):
        ip, lp = os.path.join(directory, img + suffix), os.path.join(directory, lab + suffix)
        if os.path.exists(ip) and os.path.exists(lp):
            return parse_idx(ip, lp)
    raise FileNotFoundError(f"no MNIST {split} files in {directory}")


def load_flower(root, side=None):
    """Read a generated tree (the directory holding ``manifest.json``)."""
    with open(os.path.join(root, "manifest.json")) as fh:
        manifest = json.load(fh)
    samples = manifest["samples"]
    imgs, masks = [], []
    for s in samples:
        imgs.append(np.asarray(Image.open(os.path.join(root, s["image"])).convert("RGB")))
        masks.append(np.asarray(Image.open(os.path.join(root, s["mask"]))) > 127)
    x = np.stack(imgs).astype(np.float32).transpose(0, 3, 1, 2) / 255.0
    m = np.stack(masks)
    if side is not None and side != x.shape[-1]:
        x = nn_resize(x, side, side)
        m = nn_resize(m[:, None].astype(np.float32), side, side)[:, 0] > 0.5
    return LabeledDataset(
        np.ascontiguousarray(x),
        np.array([s["label"] for s in samples]),
        manifest["classes"],
        m,
        np.array([s["fold"] for s in samples]),
        samples,
    )


def from_samples(samples, class_names, folds=None):
    """In-memory LabeledDataset from flowergen samples (same quantisation as the PNG files)."""
    x = np.stack([s.image for s in samples]).astype(np.float32).transpose(0, 3, 1, 2) / 255.0
    meta = [{"label": s.label, "frame": s.frame, "crop": s.crop, "angle": s.angle,
             "replaced": s.replaced} for s in samples]
    return LabeledDataset(
        np.ascontiguousarray(x),
        np.array([s.label for s in samples]),
        list(class_names),
        np.stack([s.mask for s in samples]),
        None if folds is None else np.asarray(folds),
        meta,
    )
