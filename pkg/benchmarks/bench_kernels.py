"""Compare the numba kernels with their pure-numpy fallbacks.

Run with the default (numba) backend so both implementations are loaded::

    python benchmarks/bench_kernels.py [--repeat 5]

Each case is checked for agreement before it is timed; the first numba call
(compilation) is excluded.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from manifold_atlas import _kernels


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    t = rng.uniform(-1, 5, 200_000)
    grid1 = rng.standard_normal(40)
    Y1 = rng.uniform(-1, 1, (200_000, 1))
    grid2 = rng.standard_normal((36, 36))
    Y2 = rng.uniform(-1, 1, (50_000, 2))
    c1 = rng.standard_normal(32)
    c2 = rng.standard_normal((16, 16))
    P = rng.standard_normal((2000, 1))
    X = rng.standard_normal((2000, 3))
    return [
        ("bspline_values m=4, 2e5 pts", "bspline_values", (4, t)),
        ("spline_eval d=1 m=4, 2e5 pts", "spline_eval", (grid1, np.array([-20]), 4, 0.0625, Y1)),
        ("spline_eval d=2 m=3, 5e4 pts", "spline_eval", (grid2, np.array([-17, -17]), 3, 0.0625, Y2)),
        ("clenshaw d=1 n=32, 2e5 pts", "clenshaw_eval", (c1, Y1)),
        ("clenshaw d=2 n=16, 5e4 pts", "clenshaw_eval", (c2, Y2)),
        ("secant_extremes 2000 pts", "secant_extremes", (P, X)),
    ]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _kernels.numba_impl is None:
        print("numba backend not active (MANIFOLD_ATLAS_BACKEND=numpy?); nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'case':34s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for label, name, call_args in cases(rng):
        fast = getattr(_kernels.numba_impl, name)
        slow = getattr(_kernels.numpy_impl, name)
        a, b = fast(*call_args), slow(*call_args)  # also compiles the numba path
        assert np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=1e-10), label
        t_np = _best(lambda: slow(*call_args), args.repeat)
        t_nb = _best(lambda: fast(*call_args), args.repeat)
        print(f"{label:34s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
