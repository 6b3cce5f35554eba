"""Benchmark: compiled fixed-point kernel vs the NumPy fallback.

The hot loop of the free-convolution solver is the per-point damped
iteration over the base spectrum (grid points x iterations x spectrum size).
Run:

    python benchmarks/bench_gdm.py [--points 800] [--dim 400]
"""
import argparse
import time

import numpy as np

from corrlss._gdm_kernels import BACKEND, fp_batch, fp_batch_fallback


def mp_quantiles(q: float, count: int) -> np.ndarray:
    s = np.linspace(-1, 1, 40001)[1:-1]
    xs = 1 + q + 2 * np.sqrt(q) * s
    dens = np.sqrt(4 * q - (xs - 1 - q) ** 2) / (2 * np.pi * q * xs)
    cdf = np.cumsum(dens) * (xs[1] - xs[0])
    cdf /= cdf[-1]
    return np.interp((np.arange(count) + 0.5) / count, cdf, xs)[::-1].copy()


def run(points: int, dim: int, t: float = 0.1, repeats: int = 3):
    d = mp_quantiles(0.5, dim)
    zs = np.linspace(0.05, 3.5, points) + 1e-5j
    variants = [("numpy-fallback", fp_batch_fallback)]
    if BACKEND == "cython":
        variants.insert(0, ("cython", fp_batch))
    results = {}
    for name, fn in variants:
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            m, res, iters = fn(zs, d, 0.5, t, 1e-12, 10_000, True)
            best = min(best, time.perf_counter() - t0)
        results[name] = (best, m)
        print(
            f"{name:>16}: {best*1e3:8.1f} ms for {points} grid points "
            f"(median iterations {int(np.median(iters))}, max residual {res.max():.1e})"
        )
    if len(results) == 2:
        (fast_name, (tf, mf)), (slow_name, (ts, ms)) = results.items()
        print(f"{'speedup':>16}: {ts / tf:.1f}x ({fast_name} over {slow_name}); "
              f"max |difference| = {np.max(np.abs(mf - ms)):.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=800)
    ap.add_argument("--dim", type=int, default=400)
    args = ap.parse_args()
    print(f"active backend: {BACKEND}")
    run(args.points, args.dim)
