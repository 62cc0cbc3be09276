"""Benchmark the active kernel backend against the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--repeat N] [--batch N]

With the default (numba) backend this compares every jitted hot kernel
against its vectorized numpy twin on training-shaped inputs, then times one
full forward/backward pass through the default network. Set
PATCHSSL_BACKEND=numpy to time the fallback path end to end instead.
"""

import argparse
import time

import numpy as np

from patchssl import kernels
from patchssl.model import backward, bce_loss, build_network, default_config, forward
from patchssl.numerics import Rng


def timeit(fn, repeat):
    fn()  # warm-up; numba compiles here on first call
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=50)
    parser.add_argument("--batch", type=int, default=16)
    args = parser.parse_args()

    rng = Rng(0)
    n = args.batch
    x = rng.normal(size=(n, 8, 16, 16))
    w3 = rng.normal(size=(4, 8, 3, 3))
    b3 = rng.normal(size=4)
    dy3 = rng.normal(size=(n, 4, 16, 16))
    w1 = rng.normal(size=(4, 8))
    dy1 = rng.normal(size=(n, 4, 16, 16))
    a = rng.normal(size=(n, 64))
    b = rng.normal(size=(64, 32))

    cases = [
        ("matmul 16x64@64x32",
         lambda: kernels.matmul(a, b),
         lambda: kernels._matmul_numpy(a, b)),
        ("conv3x3 forward",
         lambda: kernels.conv3x3_forward(x, w3, b3),
         lambda: kernels._conv3x3_forward_numpy(x, w3, b3)),
        ("conv3x3 backward",
         lambda: kernels.conv3x3_backward(x, w3, dy3),
         lambda: kernels._conv3x3_backward_numpy(x, w3, dy3)),
        ("conv1x1 forward",
         lambda: kernels.conv1x1_forward(x, w1, b3),
         lambda: kernels._conv1x1_forward_numpy(x, w1, b3)),
        ("conv1x1 backward",
         lambda: kernels.conv1x1_backward(x, w1, dy1),
         lambda: kernels._conv1x1_backward_numpy(x, w1, dy1)),
        ("avgpool2x2 forward",
         lambda: kernels.avgpool2x2_forward(x),
         lambda: kernels._avgpool2x2_forward_numpy(x)),
    ]

    print(f"active backend: {kernels.BACKEND}; per-call mean over {args.repeat} runs")
    print(f"{'kernel':22} {'active':>12} {'numpy':>12} {'speedup':>9}")
    for name, active, fallback in cases:
        t_active = timeit(active, args.repeat)
        t_numpy = timeit(fallback, args.repeat)
        print(f"{name:22} {t_active * 1e6:10.1f}us {t_numpy * 1e6:10.1f}us "
              f"{t_numpy / t_active:8.2f}x")

    net = build_network(default_config(), Rng(1), (1, 16, 16)).train()
    xb = rng.uniform(0, 1, (n, 1, 16, 16))
    labels = (rng.random(n) < 0.5).astype(float)

    def step():
        p, cache = forward(net, xb, Rng(2), update_stats=False)
        lv = bce_loss(p, labels)
        backward(net, cache, lv.grad_wrt_output)

    t_step = timeit(step, args.repeat)
    print(f"\nfull fwd+bwd, default net, batch {n} [{kernels.BACKEND}]: {t_step * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
