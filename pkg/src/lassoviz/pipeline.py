"""Glue shared by the CLI and the experiment harness: dataset loading, training
defaults and the per-fold select/explain/evaluate loop."""
import logging
import os

import numpy as np

from . import flowergen
from .data import LabeledDataset, from_samples, load_flower, load_mnist
from .descriptor import build_matrices
from .network import Hyperparams, accuracy, build_net, flower_net, mnist_net, train
from .selector import solve_mu_lasso

log = logging.getLogger(__name__)

FLOWER_HP = Hyperparams(epochs=20, batch_size=32, lr=0.02)
MNIST_HP = Hyperparams(epochs=3, batch_size=64, lr=0.05)
MNIST_TRAIN_SUBSET = 20000


def flower_spec(variant, profile="mini"):
    spec = flowergen.FlowerSpec(variant)
    if profile == "mini":
        return flowergen.mini_profile(spec)
    if profile != "full":
        raise ValueError(f"unknown profile {profile!r}")
    return spec


def flower_in_memory(variant, profile="mini", seed=0):
    """Render a flower dataset without touching disk (same pixels as the PNG tree)."""
    spec = flower_spec(variant, profile)
    samples = list(flowergen.iter_samples(spec))
    folds = flowergen.assign_folds([s.label for s in samples], seed)
    return from_samples(samples, spec.class_names, folds)


def load_dataset(path, split="train", side=None):
    """A flower tree (directory with manifest.json) or an MNIST IDX directory."""
    if os.path.exists(os.path.join(path, "manifest.json")):
        return load_flower(path, side)
    return load_mnist(path, split)


def default_net(ds, seed=0):
    if ds.images.shape[1] == 1 and ds.side == 28:
        return mnist_net(seed, ds.n_classes)
    if ds.images.shape[1] == 3:
        return flower_net(ds.n_classes, seed, ds.side)
    return build_net(ds.side, ds.images.shape[1], ds.n_classes, seed)


def default_hyperparams(ds):
    return MNIST_HP if ds.images.shape[1] == 1 else FLOWER_HP


def train_model(ds, seed=0, hp=None, net=None):
    net = net or default_net(ds, seed)
    return train(net, ds.images, ds.labels, hp or default_hyperparams(ds), seed=seed)


def train_mnist(directory, seed=0, subset=MNIST_TRAIN_SUBSET, hp=None):
    """Train on the first ``subset`` training images; returns (net, test accuracy)."""
    tr = load_mnist(directory, "train")
    te = load_mnist(directory, "test")
    if subset:
        tr = tr.subset(np.arange(min(subset, len(tr))))
    net = train_model(tr, seed, hp or MNIST_HP)
    return net, accuracy(net, te.images, te.labels)


class FoldRun:
    """Trained model, relevance matrix and held-out split for one CV fold."""

    def __init__(self, ds: LabeledDataset, fold, mu=10.0, seed=0, hp=None, opts=None):
        self.fold = fold
        self.train_set, self.test_set = ds.split(fold)
        self.net = train_model(self.train_set, seed, hp)
        self.test_accuracy = accuracy(self.net, self.test_set.images, self.test_set.labels)
        self.mats = build_matrices(self.net, self.train_set.images, self.train_set.labels)
        self.W, self.report = solve_mu_lasso(self.mats, mu, opts)
        log.info("fold %d: test acc %.3f, nnz %d", fold, self.test_accuracy, self.W.nnz())
