"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the median time per call for each kernel and for a full forward +
deconv pass of the flower net, and checks that both backends agree.
"""
import argparse
import statistics
import time

import numpy as np

from lassoviz import kernels
from lassoviz.deconv import POLICIES, deconv_backward
from lassoviz.network import FeatureId, flower_net, forward


def timed(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def cases(rng):
    x = rng.random((32, 16, 32, 32), dtype=np.float32)
    cols = kernels.im2col(x, 5, 1)
    pooled, sw = kernels.maxpool(x, 2, 2)
    net = flower_net(6)
    img = rng.random((1, 3, 64, 64), dtype=np.float32)

    def deconv():
        tr = forward(net, img)
        return deconv_backward(net, tr, FeatureId(3, 0), POLICIES["ours"])

    return {
        "im2col 32x16x32x32 k5": lambda: kernels.im2col(x, 5, 1),
        "col2im 32x16x32x32 k5": lambda: kernels.col2im(cols, 16, 32, 32, 5, 1),
        "maxpool 32x16x32x32 w2": lambda: kernels.maxpool(x, 2, 2),
        "unpool 32x16x16x16": lambda: kernels.unpool(pooled, sw, 32, 32),
        "forward batch 64": lambda: forward(net, rng.random((64, 3, 64, 64), dtype=np.float32)),
        "forward+deconv 1 image": deconv,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    results = {}
    outputs = {}
    for backend in ("cython", "numpy"):
        try:
            kernels.use_backend(backend)
        except ImportError:
            print(f"{backend}: not available")
            continue
        rng = np.random.default_rng(0)
        for name, fn in cases(rng).items():
            results.setdefault(name, {})[backend] = timed(fn, args.repeat)
        rng = np.random.default_rng(1)
        x = rng.random((4, 3, 17, 17), dtype=np.float32)
        outputs[backend] = (kernels.im2col(x, 3, 2), kernels.maxpool(x, 2, 2))
    if len(outputs) == 2:
        a, b = outputs["cython"], outputs["numpy"]
        same = np.array_equal(a[0], b[0]) and all(np.array_equal(u, v) for u, v in zip(a[1], b[1]))
        print(f"backends agree: {same}")
    print(f"{'case':<26}{'cython ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, r in results.items():
        c, n = r.get("cython"), r.get("numpy")
        sp = f"{n / c:9.2f}x" if c and n else "-"
        print(f"{name:<26}{(c or 0) * 1e3:12.3f}{(n or 0) * 1e3:12.3f}{sp:>10}")


if __name__ == "__main__":
    main()
