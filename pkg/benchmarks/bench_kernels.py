"""Timing comparison of the compiled kernels against the pure-NumPy fallback.

Runs the two hot paths — minibatch loss/gradient evaluation and
Ornstein-Uhlenbeck path generation — under each available backend and prints
a table of per-call times and speedups.

Usage: python3 benchmarks/bench_kernels.py [--repeats 30]
"""

import argparse
import time

import numpy as np

from ratiopp import kernels
from ratiopp.estimators import TrainConfig
from ratiopp.net import NetConfig, init_network


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_loss_grad(backend, repeats):
    cfg = NetConfig(in_dim=3, out_dim=7, n_layers=8, width=64)
    net = init_network(cfg, seed=0)
    rng = np.random.default_rng(1)
    batch = TrainConfig().batch_size
    x = rng.normal(size=(batch, cfg.in_dim))
    labels = rng.integers(0, cfg.out_dim + 1, size=batch)
    grad_w = [np.zeros_like(w) for w in net.weights]
    grad_b = [np.zeros_like(b) for b in net.biases]

    def call():
        backend.loss_grad(x, labels, net.weights, net.biases, cfg.leaky_slope,
                          net.n_act, True, grad_w, grad_b)

    call()  # warm-up
    return _time(call, repeats)


def bench_ou_path(backend, repeats):
    rng = np.random.default_rng(2)
    n = 1_000_000
    x0 = 0.1
    dts = np.full(n, 0.01)
    gauss = rng.standard_normal(n)

    def call():
        backend.ou_path(x0, dts, gauss, 0.2, 0.0, 0.2)

    call()
    return _time(call, repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    names = kernels.available()
    print(f"available backends: {', '.join(names)}")
    results = {}
    for name in names:
        backend = kernels.get(name)
        results[name] = {
            "loss_grad (512x[3->7], 8x64)": bench_loss_grad(backend, args.repeats),
            "ou_path (1e6 steps)": bench_ou_path(backend, max(3, args.repeats // 3)),
        }

    baseline = "numpy"
    width = max(len(k) for v in results.values() for k in v)
    header = f"{'benchmark':<{width}}" + "".join(f"  {n:>12}" for n in names)
    if baseline in results and len(names) > 1:
        header += "  speedup"
    print(header)
    for bench in next(iter(results.values())):
        row = f"{bench:<{width}}"
        for name in names:
            row += f"  {results[name][bench] * 1e3:>10.3f}ms"
        if baseline in results and len(names) > 1:
            other = [n for n in names if n != baseline][0]
            row += f"  {results[baseline][bench] / results[other][bench]:>6.2f}x"
        print(row)


if __name__ == "__main__":
    main()
