"""Time the compiled loops against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from trawlkit import _fallback

try:
    from trawlkit import _core
except ImportError:  # not built
    _core = None


def cases(g):
    n_t, k = 4, 2000
    prefix = np.ascontiguousarray(np.cumsum(g.standard_normal((k * n_t + 64, 40)), axis=1))
    heights = g.integers(0, 40, 64).astype(np.int64)
    yield "grid_window_sums", lambda m: m.grid_window_sums(prefix, heights, n_t, k)

    n, D = 20_000, 16
    l0 = g.integers(0, 5000, n).astype(np.int64)
    x, y = g.uniform(size=n), g.standard_normal(n)
    H = np.ascontiguousarray(np.sort(g.uniform(size=(n, D)), axis=1)[:, ::-1])
    yield "cpp_scatter", lambda m: m.cpp_scatter(l0, x, y, H, np.zeros(5000))

    Y = g.standard_normal((50, 5000 + 49))
    yield "fast_convolution", lambda m: m.fast_convolution(Y)

    K = np.ascontiguousarray(g.uniform(size=(5, 5)) < 0.5)
    draws = np.ascontiguousarray(g.standard_normal((200, 200)))
    yield "ambit_scatter", lambda m: m.ambit_scatter(np.zeros((204, 204)), draws, K)

    yrel = np.ascontiguousarray(g.uniform(-0.5, 1.0, (100_000, 5)))
    Hc = np.ascontiguousarray(g.uniform(size=(100_000, 5)))
    yield "indicator_codes", lambda m: m.indicator_codes(yrel, Hc)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    g = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, fn in cases(g):
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _core is None:
            print(f"{name:<18}{t_py:>10.2f}{'-':>11}{'-':>9}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18}{t_py:>10.2f}{t_c:>11.2f}{t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
