import os

import numpy as np
import pytest

from lassoviz import pipeline
from lassoviz.network import FC, Conv, Flatten, MaxPool, Network, ReLU, Softmax
from lassoviz.tensor import ConvSpec

MNIST_DIR = os.environ.get("LASSOVIZ_MNIST", "/root/data/mnist")


def conv(rng, cin, cout, k, s=1, o=0, bias=True):
    w = rng.standard_normal((cout, cin, k, k)).astype(np.float32) / np.sqrt(cin * k * k)
    b = rng.standard_normal(cout).astype(np.float32) * 0.1 if bias else np.zeros(cout, np.float32)
    return Conv(ConvSpec(k, s, o, cin, cout), w, b)


def fc(rng, n_in, n_out, bias=True):
    w = rng.standard_normal((n_out, n_in)).astype(np.float32) / np.sqrt(n_in)
    b = rng.standard_normal(n_out).astype(np.float32) * 0.1 if bias else np.zeros(n_out, np.float32)
    return FC(w, b)


def small_net(seed=0, side=12, cin=2, classes=3, stride=2):
    """conv(k4,s2,o1) relu pool conv(k3) relu flatten fc relu fc softmax."""
    rng = np.random.default_rng(seed)
    s1 = (side + 2 - 4) // stride + 1
    s2 = s1 // 2 - 2
    layers = [conv(rng, cin, 4, 4, stride, 1), ReLU(), MaxPool(2, 2), conv(rng, 4, 5, 3), ReLU(),
              Flatten(), fc(rng, 5 * s2 * s2, 6), ReLU(), fc(rng, 6, classes), Softmax()]
    return Network(layers, side, cin, classes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def flower_single():
    return pipeline.flower_in_memory("single-6c", "mini", seed=0)


@pytest.fixture(scope="session")
def flower_fold0(flower_single):
    return pipeline.FoldRun(flower_single, 0, mu=10.0, seed=0)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains models")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
