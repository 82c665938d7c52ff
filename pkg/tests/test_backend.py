from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trawlkit import _fallback, _kernels

core = pytest.importorskip("trawlkit._core")

seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.integers(1, 6), st.integers(1, 5), st.integers(1, 12))
def test_grid_window_sums(s, n_t, nh, k):
    g = np.random.default_rng(s)
    rows = k * n_t + nh
    prefix = np.ascontiguousarray(np.cumsum(g.standard_normal((rows, 8)), axis=1))
    heights = g.integers(0, 8, nh).astype(np.int64)
    a = core.grid_window_sums(prefix, heights, n_t, k)
    b = _fallback.grid_window_sums(prefix, heights, n_t, k)
    assert np.array_equal(a, b)


@given(seeds, st.integers(0, 30), st.integers(0, 6), st.integers(1, 15))
def test_cpp_scatter(s, n, D, k):
    g = np.random.default_rng(s)
    l0 = g.integers(0, k + 2, n).astype(np.int64)
    x, y = g.uniform(size=n), g.standard_normal(n)
    H = np.ascontiguousarray(np.sort(g.uniform(size=(n, D)), axis=1)[:, ::-1])
    oa, ob = np.zeros(k), np.zeros(k)
    ma = core.cpp_scatter(l0, x, y, H, oa)
    mb = _fallback.cpp_scatter(l0, x, y, H, ob)
    assert np.array_equal(oa, ob)
    assert np.array_equal(np.asarray(ma, dtype=bool), np.asarray(mb, dtype=bool))


@given(seeds, st.integers(1, 8), st.integers(1, 20))
def test_fast_convolution(s, I, k):
    Y = np.random.default_rng(s).standard_normal((I, k + I - 1))
    a, na = core.fast_convolution(Y)
    b, nb = _fallback.fast_convolution(Y)
    assert np.array_equal(a, b) and na == nb


@given(seeds, st.integers(1, 4), st.integers(1, 4), st.integers(1, 6), st.integers(1, 6))
def test_ambit_scatter(s, Is, It, P, Q):
    g = np.random.default_rng(s)
    K = np.ascontiguousarray(g.uniform(size=(Is, It)) < 0.6)
    draws = np.ascontiguousarray(g.standard_normal((P, Q)))
    a = np.zeros((P + Is - 1, Q + It - 1))
    b = a.copy()
    core.ambit_scatter(a, draws, K)
    _fallback.ambit_scatter(b, draws, K)
    assert np.array_equal(a, b)


@given(seeds, st.integers(1, 40), st.integers(1, 6), st.integers(1, 8))
def test_indicator_codes(s, M, Is, It):
    g = np.random.default_rng(s)
    yrel = np.ascontiguousarray(g.uniform(-0.5, 1.0, (M, Is)))
    H = np.ascontiguousarray(g.uniform(0, 1, (M, It)))
    assert np.array_equal(core.indicator_codes(yrel, H), _fallback.indicator_codes(yrel, H))


def test_compiled_backend_selected():
    if os.environ.get("TRAWLKIT_PURE") in ("1", "true", "yes"):
        assert _kernels.BACKEND == "python"
    else:
        assert _kernels.BACKEND == "cython"


_SCRIPT = """
import numpy as np
from trawlkit import _kernels
from trawlkit.ambit import slice_estimation, slice_partition_field
from trawlkit.cpp import simulate_trawl_full
from trawlkit.geometry import exponential, triangle
from trawlkit.grid import GridConfig, simulate_grid
from trawlkit.levy import Gamma, Gaussian
from trawlkit.rng import RngStream
from trawlkit.slices import simulate_slice
tri = triangle(-1.0)
parts = [
    simulate_slice(exponential(1.0), Gamma(2.0, 3.0), 300, 0.2, RngStream(1)),
    simulate_slice(tri, Gaussian(0.0, 1.0), 300, 0.1, RngStream(2)),
    simulate_grid(tri, Gamma(2.0, 3.0), GridConfig.from_delta(tri, 0.5, 50, -1.0, 0.05), RngStream(3)),
    simulate_trawl_full(tri, Gamma(2.0, 1.0), 50, 0.25, RngStream(4), eps=1e-2),
    slice_partition_field(slice_estimation(tri, 0.2, 0.2, 20000, RngStream(5)), Gaussian(0.0, 1.0), 10, 10, RngStream(6)).ravel(),
]
print(_kernels.BACKEND)
print(np.concatenate(parts).tobytes().hex())
"""


def _run(pure):
    env = dict(os.environ)
    env.pop("TRAWLKIT_PURE", None)
    if pure:
        env["TRAWLKIT_PURE"] = "1"
    res = subprocess.run([sys.executable, "-c", _SCRIPT], capture_output=True, text=True, env=env, check=True)
    return res.stdout.split()


def test_simulators_bit_identical_across_backends():
    (ba, ha), (bb, hb) = _run(False), _run(True)
    assert (ba, bb) == ("cython", "python")
    assert ha == hb
