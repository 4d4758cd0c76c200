#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Run after building the extension (pip install -e . --no-build-isolation):

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from peakonlab._kernels import _pykernels

try:
    from peakonlab._kernels import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, *args, repeat=5, number=1):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def main():
    rng = np.random.default_rng(0)
    n = 8
    p = rng.uniform(0.5, 2.0, n)
    q = np.sort(rng.uniform(-40, 40, n))
    x = np.linspace(-80, 80, 400_001)
    v = np.abs(np.sin(x)) + 0.1

    cases = [
        ("eval_train (N=8, M=4e5)", "eval_train", (p, q, x), 1),
        ("ode_rhs (N=8) x2000", "ode_rhs", (p, q), 2000),
        ("rk4_path (N=2, 1e5 steps)", "rk4_path",
         (np.array([1.0, 2.0]), np.array([0.0, 10.0]), 1e-4, 100_000), 1),
        ("exp_accumulate (M=4e5)", "exp_accumulate", (v, 4e-4), 1),
    ]

    print(f"{'kernel':<28} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for label, name, args, number in cases:
        t_py = timeit(getattr(_pykernels, name), *args, number=number)
        if _ckernels is not None:
            t_c = timeit(getattr(_ckernels, name), *args, number=number)
            print(f"{label:<28} {t_py*1e3:>10.2f}ms {t_c*1e3:>10.2f}ms "
                  f"{t_py/t_c:>8.1f}x")
        else:
            print(f"{label:<28} {t_py*1e3:>10.2f}ms {'n/a':>12} {'n/a':>9}")
    if _ckernels is None:
        print("\ncompiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
