from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import var_se, within_se
from trawlkit import _fallback, _kernels
from trawlkit.geometry import exponential, long_memory, rectangle, triangle
from trawlkit.grid import GridConfig, compute_indicator, default_horizon, grid_mse_bound, included_area, simulate_grid
from trawlkit.levy import Cauchy, Gamma, Gaussian, Poisson
from trawlkit.rng import RngStream


def test_indicator_rectangle_all_true():
    cfg = GridConfig(n_t=2, n_x=2, tau=1.0, k=3, T=-1.0)
    ind = compute_indicator(rectangle(-1.0), cfg)
    assert ind.shape == (2, 2) and ind.all()
    assert included_area(rectangle(-1.0), cfg) == pytest.approx(1.0)


@pytest.mark.parametrize("trawl", [exponential(1.0), long_memory(0.5, 1.5)], ids=["exp", "lm"])
def test_default_horizon_keeps_every_cell(trawl):
    delta = 0.05
    T = default_horizon(trawl, 1e-4, delta)
    assert trawl(T) == pytest.approx(delta)
    near = GridConfig.from_delta(trawl, 0.5, 5, T, delta)
    far = GridConfig.from_delta(trawl, 0.5, 5, 4 * T, delta)
    # columns between 4T and T hold no cell
    assert included_area(trawl, near) == pytest.approx(included_area(trawl, far), rel=1e-12)
    assert default_horizon(triangle(-1.0), 1e-4, delta) == -1.0


def test_indicator_unbounded_example_is_empty():
    # e^{2.75 t} with T=-3, dt=1, dx=0.2: every top-left corner lies above phi
    trawl = exponential(2.75, height=1.0)
    cfg = GridConfig(n_t=1, n_x=5, tau=1.0, k=2, T=-3.0)
    with pytest.warns(RuntimeWarning):
        ind = compute_indicator(trawl, cfg)
    assert ind.shape == (5, 3) and not ind.any()
    assert included_area(trawl, cfg) == 0.0


def test_indicator_cell_wider_than_height():
    cfg = GridConfig(n_t=2, n_x=1, tau=1.0, k=2, T=-1.0, dx=1.5)
    with pytest.warns(RuntimeWarning):
        assert not compute_indicator(rectangle(-1.0), cfg).any()


def test_indicator_corner_rule():
    # triangle 1 + t/2 on [-2, 0], dt = dx = 0.5: column j holds floor(phi(T + (j-1)dt) / dx) cells
    tri = triangle(-2.0)
    cfg = GridConfig(n_t=2, n_x=2, tau=1.0, k=1, T=-2.0)
    ind = compute_indicator(tri, cfg)
    # phi at -2, -1.5, -1, -0.5 is 0, 0.25, 0.5, 0.75
    assert ind.sum(axis=0).tolist() == [0, 0, 1, 1]
    assert included_area(tri, cfg) == pytest.approx(0.5)


def test_config_validation_and_flooring():
    with pytest.raises(ValueError):
        GridConfig(n_t=0, n_x=1, tau=1.0, k=1, T=-1.0)
    with pytest.raises(ValueError):
        GridConfig(n_t=1, n_x=1, tau=1.0, k=1, T=1.0)
    cfg = GridConfig(n_t=4, n_x=2, tau=1.0, k=1, T=-1.1)
    assert cfg.n_cols() == 5 and cfg.horizon() == pytest.approx(-1.25)
    cfg = GridConfig.from_delta(triangle(-2.0), 0.15, 10, -2.0, 0.05)
    assert cfg.n_t == 3 and cfg.dt() == pytest.approx(0.05) and cfg.n_x == 20


def test_zero_seed_gives_zeros():
    cfg = GridConfig.from_delta(triangle(-2.0), 0.5, 20, -2.0, 0.1)
    assert np.all(simulate_grid(triangle(-2.0), Gaussian(0.0, 0.0), cfg, RngStream(1)) == 0.0)


@pytest.mark.parametrize("chunk", [1, 7, 4096])
def test_degenerate_seed_gives_included_area(chunk):
    # Gaussian(1, 0) makes every cell worth its area: each output is the included area
    tri = triangle(-2.0)
    cfg = GridConfig.from_delta(tri, 0.3, 37, -2.0, 0.1)
    X = simulate_grid(tri, Gaussian(1.0, 0.0), cfg, RngStream(1), chunk=chunk)
    assert X == pytest.approx(np.full(37, included_area(tri, cfg)), rel=1e-12)


def test_chunking_does_not_change_values():
    lm = long_memory(0.5, 1.5)
    cfg = GridConfig.from_delta(lm, 0.2, 50, -10.0, 0.1)
    a = simulate_grid(lm, Gamma(2.0, 3.0), cfg, RngStream(2), chunk=4096)
    b = simulate_grid(lm, Gamma(2.0, 3.0), cfg, RngStream(2), chunk=64)
    assert np.array_equal(a, b)


@given(st.integers(1, 5), st.integers(1, 12), st.integers(1, 6))
def test_window_sums_match_brute_force(n_t, n_cols, k):
    rng = np.random.default_rng(n_t * 100 + n_cols * 10 + k)
    rows = 4
    heights = rng.integers(0, rows + 1, size=n_cols).astype(np.int64)
    cells = rng.standard_normal(((k - 1) * n_t + n_cols, rows))
    prefix = np.zeros((cells.shape[0], rows + 1))
    np.cumsum(cells, axis=1, out=prefix[:, 1:])
    got = _kernels.grid_window_sums(np.ascontiguousarray(prefix), heights, n_t, k)
    want = np.array([sum(cells[l * n_t + j, : heights[j]].sum() for j in range(n_cols)) for l in range(k)])
    assert got == pytest.approx(want, abs=1e-12)
    assert np.array_equal(got, _fallback.grid_window_sums(prefix, heights, n_t, k))


def test_poisson_rectangle_mean():
    rect = rectangle(-1.0)
    cfg = GridConfig(n_t=4, n_x=4, tau=1.0, k=10_000, T=-1.0)
    # tau = |T|: disjoint trawls, iid outputs
    X = simulate_grid(rect, Poisson(3.0), cfg, RngStream(3))
    assert within_se(X, 3.0 * included_area(rect, cfg))
    assert np.all(X == np.round(X))


def test_mean_and_variance_identities():
    tri = triangle(-2.0)
    cfg = GridConfig.from_delta(tri, 2.0, 10_000, -2.0, 0.1)
    X = simulate_grid(tri, Gamma(2.0, 3.0), cfg, RngStream(4))
    c = included_area(tri, cfg)
    assert c < tri.total_area
    assert within_se(X, 6.0 * c)
    assert abs(X.var() - 18.0 * c) <= 4 * var_se(X)


def test_grid_covariance_counts_shared_cells():
    rect = rectangle(-1.0)
    cfg = GridConfig(n_t=4, n_x=2, tau=0.5, k=20_000, T=-1.0)
    X = simulate_grid(rect, Gaussian(0.0, 1.0), cfg, RngStream(5))
    # consecutive trawls share half of the cells
    cov = np.mean(X[1:] * X[:-1])
    assert abs(cov - 0.5) < 4 * math.sqrt(1.25 / len(X))


@given(st.sampled_from([0.2, 0.1, 0.05]), st.floats(0.1, 2.0))
def test_included_area_bounded_and_nested(delta, tau):
    lm = long_memory(0.5, 1.5)
    coarse = GridConfig.from_delta(lm, tau, 1, -10.0, delta, dt=delta)
    fine = GridConfig(coarse.n_t * 2, coarse.n_x * 2, tau, 1, coarse.horizon(), dx=delta / 2)
    a1, a2 = included_area(lm, coarse), included_area(lm, fine)
    assert a1 <= a2 + 1e-12 <= lm.total_area + 1e-12


def test_long_memory_ratio_grows():
    lm = long_memory(0.5, 1.5)
    ratios = []
    for d in (0.1, 0.05, 0.025):
        cfg = GridConfig.from_delta(lm, d, 1, -(d**-0.5), d)
        ratios.append(included_area(lm, cfg) / lm.total_area)
    assert all(r < 1 for r in ratios)
    assert ratios[0] < ratios[1] < ratios[2]


def test_mse_bound_value():
    # C = |T| dx + phi(0) dt + G(T) = 0.1 + 0.1 + 0 for the unit rectangle
    b = grid_mse_bound(rectangle(-1.0), Gamma(2.0, 3.0), -1.0, 0.1, 0.1)
    assert b == pytest.approx(0.2**2 * 36 + 0.2 * 18)
    # the grid covers the rectangle exactly, so the variance deficit is 0 <= b
    cfg = GridConfig(10, 10, 1.0, 1, -1.0)
    assert 18.0 * (1.0 - included_area(rectangle(-1.0), cfg)) <= b


def test_mse_bound_tends_to_zero_and_refuses_heavy_tails():
    tri = triangle(-2.0)
    vals = [grid_mse_bound(tri, Gamma(2.0, 3.0), -2.0, d, d) for d in (0.1, 0.01, 0.001)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 0.1
    with pytest.raises(ValueError):
        grid_mse_bound(tri, Cauchy(1.0), -2.0, 0.1, 0.1)
