#!/usr/bin/env python3
"""Time the numeric kernels on the numpy and compiled backends.

The shapes mirror one policy forward/backward pass on the default network
(768-wide context, 128-wide encoder, 100-arm instruction head).  Numbers
are best-of-repeat microseconds per call, so treat them as floor costs:
real runs interleave allocation and Python dispatch on top.

Run from the repo root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --inner 5000 --repeats 7
"""

import argparse
import time

import numpy as np

from confbandit.kernels import pykernels

try:
    from confbandit.kernels import _cykernels
except ImportError:
    _cykernels = None


def build_cases(rng):
    w_enc = rng.normal(size=(128, 768))
    b_enc = rng.normal(size=128)
    x_enc = rng.normal(size=768)
    w_hid = rng.normal(size=(64, 128))
    b_hid = rng.normal(size=64)
    h = np.tanh(rng.normal(size=128))
    w_out = rng.normal(size=(100, 64))
    b_out = rng.normal(size=100)
    a = np.maximum(rng.normal(size=64), 0.0)
    dy = rng.normal(size=100)
    logits = rng.normal(size=100) * 2.0
    probs = pykernels.softmax(logits, 1.0)
    u_vec = rng.random(1000)
    return [
        ("dense_tanh 128x768", "dense_tanh", (w_enc, b_enc, x_enc)),
        ("dense_relu 64x128", "dense_relu", (w_hid, b_hid, h)),
        ("dense_linear 100x64", "dense_linear", (w_out, b_out, a)),
        ("grad_dense 100x64", "grad_dense", (w_out, a, dy)),
        ("tanh_backward 128", "tanh_backward", (h, rng.normal(size=128))),
        ("relu_backward 64", "relu_backward", (a, rng.normal(size=64))),
        ("softmax 100 arms", "softmax", (logits, 0.7)),
        ("log_softmax 100 arms", "log_softmax", (logits,)),
        ("categorical x1000", "categorical_from_uniform", (probs, u_vec)),
    ]


def best_us(fn, args, inner, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        dt = time.perf_counter() - t0
        best = min(best, dt / inner)
    return best * 1e6


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--inner", type=int, default=2000, help="calls per timing sample")
    ap.add_argument("--repeats", type=int, default=5, help="timing samples per op (best wins)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cases = build_cases(rng)

    if _cykernels is None:
        print("compiled backend not built; timing the numpy backend only")
    header = f"{'op':<24}{'python us':>12}"
    if _cykernels is not None:
        header += f"{'cython us':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, name, call_args in cases:
        py_us = best_us(getattr(pykernels, name), call_args, args.inner, args.repeats)
        row = f"{label:<24}{py_us:>12.2f}"
        if _cykernels is not None:
            cy_us = best_us(getattr(_cykernels, name), call_args, args.inner, args.repeats)
            row += f"{cy_us:>12.2f}{py_us / cy_us:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
