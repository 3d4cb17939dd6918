"""Time the compiled and numpy Sinkhorn sweep kernels on the same inputs.

Usage: python benchmarks/bench_kernel.py [--iters N] [--repeat R]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from sinkhorn_hall import engine, kernel
from sinkhorn_hall.crosscheck import random_pattern
from sinkhorn_hall.matrix import MarginalPair, NonnegMatrix

CASES = [
    ("hall 3x3", NonnegMatrix.from_dense([[1, 0, 0], [1, 0, 0], [1, 1, 1]])),
    ("dense 8x8", NonnegMatrix.from_dense(np.ones((8, 8)))),
    ("random 32x32", random_pattern(np.random.default_rng(0), 32, 32, 0.3)),
    ("random 128x128", random_pattern(np.random.default_rng(1), 128, 128, 0.1)),
]


def best_time(sweeps, A: NonnegMatrix, iters: int, repeat: int) -> float:
    mp = MarginalPair.uniform(*A.shape)
    kernel_before = kernel.sinkhorn_sweeps
    kernel.sinkhorn_sweeps = sweeps
    try:
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            engine.run(A, mp, iters, record_stride=0)
            times.append(time.perf_counter() - t0)
    finally:
        kernel.sinkhorn_sweeps = kernel_before
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernel.compiled_sweeps is None:
        print("compiled kernel not built; only the fallback is timed")
    print(f"{'case':<16} {'nnz':>6} {'python us/it':>13} {'cython us/it':>13} {'speedup':>8}")
    for name, A in CASES:
        py = best_time(kernel.python_sweeps, A, args.iters, args.repeat) / args.iters * 1e6
        if kernel.compiled_sweeps is None:
            print(f"{name:<16} {A.nnz:>6} {py:>13.2f} {'-':>13} {'-':>8}")
            continue
        cy = best_time(kernel.compiled_sweeps, A, args.iters, args.repeat) / args.iters * 1e6
        print(f"{name:<16} {A.nnz:>6} {py:>13.2f} {cy:>13.2f} {py / cy:>7.1f}x")


if __name__ == "__main__":
    main()
