#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times each hot kernel on desk-scale inputs and prints the per-call
medians plus the native/numpy speedup. These numbers are why the default
"auto" mode binds the compiled solver kernels and the BLAS convolutions
(see liftseg._kernels).

Usage: python benchmarks/bench_backends.py [--repeats N]
"""
import argparse
import time

import numpy as np

from liftseg._kernels import available_backends, load_backend


def median_ms(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def bench_pd_iterate(mod, repeats):
    rng = np.random.default_rng(0)
    kc, h, w = 3, 256, 256
    phi = rng.uniform(0, 1, (kc, h, w))
    u = np.ascontiguousarray(phi / np.maximum(1.0, phi.sum(axis=0)))
    ubar = u.copy()
    p = np.zeros((kc, 2, h, w))
    rho = np.ascontiguousarray(rng.normal(size=(kc, h, w)))
    step = 1.0 / np.sqrt(8.0)
    return median_ms(lambda: mod.pd_iterate(u, ubar, p, rho, 0.2, step, step, 1.0), repeats)


def bench_simplex(mod, repeats):
    rng = np.random.default_rng(1)
    v = rng.normal(size=(256 * 256, 3))
    return median_ms(lambda: mod.capped_simplex_project(v), repeats)


def bench_conv_forward(mod, repeats):
    rng = np.random.default_rng(2)
    x = np.ascontiguousarray(rng.normal(size=(32, 64, 64)))
    w = np.ascontiguousarray(rng.normal(size=(32, 32, 3, 3)))
    b = np.ascontiguousarray(rng.normal(size=32))
    return median_ms(lambda: mod.conv3x3_forward(x, w, b), repeats)


def bench_conv_grad_input(mod, repeats):
    rng = np.random.default_rng(3)
    gy = np.ascontiguousarray(rng.normal(size=(32, 64, 64)))
    w = np.ascontiguousarray(rng.normal(size=(32, 32, 3, 3)))
    return median_ms(lambda: mod.conv3x3_grad_input(gy, w), repeats)


def bench_conv_grad_weights(mod, repeats):
    rng = np.random.default_rng(4)
    x = np.ascontiguousarray(rng.normal(size=(32, 64, 64)))
    gy = np.ascontiguousarray(rng.normal(size=(32, 64, 64)))
    return median_ms(lambda: mod.conv3x3_grad_weights(x, gy), repeats)


BENCHES = [
    ("pd_iterate (3x256x256)", bench_pd_iterate),
    ("capped_simplex (65536x3)", bench_simplex),
    ("conv3x3_forward (32->32, 64x64)", bench_conv_forward),
    ("conv3x3_grad_input (32->32, 64x64)", bench_conv_grad_input),
    ("conv3x3_grad_weights (32->32, 64x64)", bench_conv_grad_weights),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    backends = available_backends()
    if "native" not in backends:
        print("compiled extension not built; timing the NumPy backend only")
    mods = {name: load_backend(name) for name in backends}

    header = f"{'kernel':36s}" + "".join(f"{name + ' (ms)':>14s}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for label, bench in BENCHES:
        times = {name: bench(mod, args.repeats) for name, mod in mods.items()}
        row = f"{label:36s}" + "".join(f"{times[name]:14.3f}" for name in backends)
        if len(backends) == 2:
            row += f"{times['numpy'] / times['native']:9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
