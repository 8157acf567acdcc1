#!/usr/bin/env python3
"""Compare the compiled kernel backend against the pure-numpy fallback.

Runs each hot kernel (Kronecker-sum marginals, log-determinant, Kendall-tau
row correlations) in both backends at several sizes and prints a timing
table with speedup factors.  The numbers are also cross-checked so a fast
but wrong kernel fails loudly.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gmgm import _kernels_np
from gmgm import kernels

if kernels.BACKEND != "compiled":
    raise SystemExit(
        "compiled backend unavailable (or GMGM_PURE_PYTHON=1); "
        "nothing to compare against"
    )


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _row(label, compiled_fn, python_fn, repeats, check):
    t_c, out_c = _time(compiled_fn, repeats)
    t_p, out_p = _time(python_fn, repeats)
    check(out_c, out_p)
    print(f"{label:<38} {t_c * 1e3:10.3f} {t_p * 1e3:10.3f} {t_p / t_c:8.1f}x")
    return t_c, t_p


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n", 1)[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.Generator(np.random.Philox(np.uint64(0)))
    print(f"{'kernel':<38} {'compiled ms':>10} {'python ms':>10} {'speedup':>9}")

    def close(a, b):
        np.testing.assert_allclose(a, b, rtol=1e-10)

    def close_list(a, b):
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-10)

    for d in (200, 500, 1000):
        e1 = rng.uniform(0.1, 3.0, d)
        e2 = rng.uniform(0.1, 3.0, d)
        _row(f"ksum_marginals 2-axis d={d}",
             lambda: kernels.ksum_marginals([e1, e2]),
             lambda: _kernels_np.ksum_marginals([e1, e2]),
             args.repeats, close_list)

    for d in (50, 100, 200):
        e1 = rng.uniform(0.1, 3.0, d)
        e2 = rng.uniform(0.1, 3.0, d)
        e3 = rng.uniform(0.1, 3.0, d)
        _row(f"ksum_marginals 3-axis d={d}",
             lambda: kernels.ksum_marginals([e1, e2, e3]),
             lambda: _kernels_np.ksum_marginals([e1, e2, e3]),
             args.repeats, close_list)

    for d in (500, 1000, 2000):
        e1 = rng.uniform(0.1, 3.0, d)
        e2 = rng.uniform(0.1, 3.0, d)
        _row(f"ksum_log_det 2-axis d={d}",
             lambda: kernels.ksum_log_det([e1, e2]),
             lambda: _kernels_np.ksum_log_det([e1, e2]),
             args.repeats, close)

    for shape in ((50, 200), (100, 500), (200, 500)):
        rows = rng.integers(0, 10, size=shape).astype(float)
        _row(f"kendall_tau_rows {shape[0]}x{shape[1]}",
             lambda: kernels.kendall_tau_rows(rows),
             lambda: _kernels_np.kendall_tau_rows(rows),
             args.repeats, close)


if __name__ == "__main__":
    main()
