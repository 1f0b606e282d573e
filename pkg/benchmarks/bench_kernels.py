#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the numpy fallback.

Times the convolution forward/backward kernels on the default working
resolution and a full small style-transfer run with each backend. Run as:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from artgenre._kernels import numpy_backend

try:
    from artgenre._kernels import _cykernels
except ImportError:
    _cykernels = None


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(backend, name):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 224, 224))
    w1 = rng.standard_normal((8, 3, 3, 3))
    b1 = rng.standard_normal(8)
    gy = rng.standard_normal((8, 224, 224))
    fwd = timeit(lambda: backend.conv2d_forward(x, w1, b1))
    bwd = timeit(lambda: backend.conv2d_backward_input(gy, w1))
    print(f"{name:>8}  conv2d_forward 3->8 @224: {1e3 * fwd:8.2f} ms   "
          f"backward: {1e3 * bwd:8.2f} ms")
    return fwd, bwd


def bench_transfer(backend_name):
    import importlib
    import os

    os.environ["ARTGENRE_BACKEND"] = backend_name
    import artgenre._kernels as kernels

    importlib.reload(kernels)
    import artgenre.convnet as convnet

    importlib.reload(convnet)
    import artgenre.neural as neural

    importlib.reload(neural)

    from artgenre.image import Image

    rng = np.random.default_rng(1)
    net = convnet.builtin_network(in_channels=3, seed=7)
    s = Image(rng.random((3, 64, 64)))
    r = Image(rng.random((3, 64, 64)))
    config = neural.StyleConfig(iterations=20, init_seed=0)
    t0 = time.perf_counter()
    neural.neural_style_transfer(s, r, net, config)
    dt = time.perf_counter() - t0
    print(f"{backend_name:>8}  20-iteration transfer @64x64: {dt:6.2f} s")
    return dt


def main():
    print("== raw kernels ==")
    bench_kernels(numpy_backend, "numpy")
    if _cykernels is not None:
        bench_kernels(_cykernels, "cython")
    else:
        print("  cython  (extension not built)")

    print("== end-to-end pixel descent ==")
    bench_transfer("numpy")
    if _cykernels is not None:
        bench_transfer("cython")


if __name__ == "__main__":
    main()
