"""Acceptance criteria, one group of tests per criterion.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints
one PASS/FAIL line per criterion. Parts that cannot hold as stated are
strict xfails with the analysis in the decisions ledger.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from click.testing import CliRunner
from scipy import integrate, special, stats

from conftest import var_se, within_se
from trawlkit.ambit import field_autocovariance, set_decomposition, slice_estimation, slice_partition_field
from trawlkit.cli import main as cli_main
from trawlkit.cpp import simulate_cpp_coupled
from trawlkit.geometry import exponential, long_memory, rectangle, triangle
from trawlkit.grid import GridConfig, included_area, simulate_grid
from trawlkit.inversion import LaplaceTransform, inverse_cdf_sample
from trawlkit.kernel import Constant, SliceGeometry, SpaceTimeMap, VolatilityPath, VolTrawlSpec, slice_kernel_integrals
from trawlkit.kernel import simulate_vm_trawl, stable_conditional_params
from trawlkit.levy import Cauchy, Gamma, Gaussian, InverseGaussian, Poisson, Stable, gamma_measure, sample_set_law
from trawlkit.rng import RngStream
from trawlkit.slices import fast_convolution, filter_matrix, naive_convolution, simulate_slice
from trawlkit.stats import acf_experiment, convergence_experiment, distribution_tests, gmm_experiment, run_repetitions

crit = pytest.mark.criterion
LM = long_memory(0.5, 1.5)  # 0.5 (1 - t)^{-1.5}, area 1


# -- 1 -------------------------------------------------------------------------


@crit(1, "slice partition marginals match the set laws")
@pytest.mark.parametrize(
    "seed,law",
    [
        (Gaussian(0.0, 1.0), stats.norm(0, 1)),
        (Gamma(2.0, 3.0), stats.gamma(2.0, scale=3.0)),
        (Poisson(5.0), stats.poisson(5.0)),
        (Cauchy(1.0), stats.cauchy(0, 1)),
    ],
    ids=["gaussian", "gamma", "poisson", "cauchy"],
)
def test_c1_marginals(seed, law, record_property):
    tr = exponential(1.0)
    x = np.array(run_repetitions(lambda s: simulate_slice(tr, seed, 10, 0.5, s)[-1], 10_000, RngStream(101)))
    res = distribution_tests(x, law)
    record_property("detail", f"{type(seed).__name__} p={res.pvalue:.3g}")
    assert res.pvalue > 1e-3


# -- 2 -------------------------------------------------------------------------


@crit(2, "mean empirical ACF reproduces the trawl ACF")
def test_c2_short_memory(record_property):
    emp, _ = acf_experiment(exponential(1.0), Gaussian(0.0, 1.0), 500, 1000, 0.5, 5, RngStream(201))
    theo = np.exp(-0.5 * np.arange(1, 6))
    record_property("detail", f"exp max gap {np.max(np.abs(emp - theo)):.4f}")
    assert np.max(np.abs(emp - theo)) < 0.02


@crit(2, "mean empirical ACF reproduces the trawl ACF")
def test_c2_long_memory(record_property):
    emp, _ = acf_experiment(LM, Gaussian(0.0, 1.0), 200, 5000, 0.5, 5, RngStream(202))
    theo = (1 + 0.5 * np.arange(1, 6)) ** -0.5
    record_property("detail", f"long memory max gap {np.max(np.abs(emp - theo)):.4f}")
    assert np.max(np.abs(emp - theo)) < 0.04


# -- 3 -------------------------------------------------------------------------


@crit(3, "grid variance ratio equals included / total area")
@pytest.mark.parametrize("delta", [0.1, 0.05, 0.025])
def test_c3_variance_ratio(delta):
    T = -(delta**-0.5)
    # trawls 7 apart never share a cell with |T| < 7, so one path gives iid values
    cfg = GridConfig.from_delta(LM, 7.0, 10_000, T, delta)
    assert cfg.dt() == pytest.approx(delta)
    x = simulate_grid(LM, Gaussian(0.0, 1.0), cfg, RngStream(300))
    ratio = included_area(LM, cfg) / 1.0
    assert abs(x.var() - ratio) <= 4 * var_se(x)


# -- 4 -------------------------------------------------------------------------


@crit(4, "grid area deficit slope in [1.9, 2.1]")
@pytest.mark.xfail(strict=True, reason="deficit is first order in delta; see ledger (criterion 4)")
def test_c4_rate():
    rep = convergence_experiment("grid", triangle(-1.0), Gaussian(0.0, 1.0), [0.1, 0.05, 0.025, 0.0125])
    h = [r[0] for r in rep.rows]
    deficit = [r[2] for r in rep.rows]
    slope = np.polyfit(np.log(h), np.log(deficit), 1)[0]
    assert 1.9 <= slope <= 2.1


# -- 5 -------------------------------------------------------------------------


@crit(5, "CPP truncation MSE within 20% of the small-jump variance")
def test_c5_truncation_mse(record_property):
    eps = [0.02, 0.01, 0.005]
    ref = min(eps) / 8
    m = gamma_measure(2.0, 1 / 3)
    tr = exponential(1.0)

    def one(s):
        paths = simulate_cpp_coupled(tr, m, eps + [ref], 1, 1.0, s)
        return [float(paths[ref][0] - paths[e][0]) ** 2 for e in eps]

    d2 = np.array(run_repetitions(one, 10_000, RngStream(500)))
    # Leb(A) int_ref^e y^2 2 y^{-1} e^{-3y} dy in closed form
    oracle = lambda a, b: 2 / 9 * ((1 + 3 * a) * math.exp(-3 * a) - (1 + 3 * b) * math.exp(-3 * b))
    ratios = [d2[:, j].mean() / oracle(ref, e) for j, e in enumerate(eps)]
    record_property("detail", "ratios " + ", ".join(f"{r:.3f}" for r in ratios))
    assert all(0.8 <= r <= 1.2 for r in ratios)


# -- 6 -------------------------------------------------------------------------


def _instances(n=100):
    gen = np.random.default_rng(600)
    for _ in range(n):
        I = int(gen.integers(1, 9))
        k = int(gen.integers(I, 40))
        Y = np.zeros((I, k + I - 1))
        # dyadic rationals: every summation order is exact
        Y[:, I - 1 :] = gen.integers(-2**20, 2**20, (I, k)) / 2**10
        yield I, k, Y


@crit(6, "fast convolution equals the naive oracle; addition count formula")
def test_c6_bit_identical():
    for I, k, Y in _instances():
        assert np.array_equal(fast_convolution(Y), naive_convolution(Y, filter_matrix(I)))


@crit(6, "fast convolution equals the naive oracle; addition count formula")
@pytest.mark.xfail(strict=True, reason="printed total exceeds its own parts by 2k - I; see ledger (addition count)")
def test_c6_printed_count():
    for I, k, Y in _instances():
        _, adds = fast_convolution(Y, return_count=True)
        assert adds == 2 * I * k - I * I / 2 - I / 2


# -- 7 -------------------------------------------------------------------------

RECT = rectangle(-1.0)


@pytest.fixture(scope="module")
def rect_table():
    return slice_estimation(RECT, 0.5, 0.5, 10**6, RngStream(700))


@crit(7, "ambit slice table and field covariance")
def test_c7_table(rect_table):
    pieces = set_decomposition(rect_table)
    assert len(pieces) == 4
    se = dict(zip(rect_table.keys, rect_table.stderr))
    for _, key, area in pieces:
        assert abs(area - 0.25) <= 3 * se[key]


@pytest.fixture(scope="module")
def rect_fields(rect_table):
    return np.array([slice_partition_field(rect_table, Gaussian(0.0, 1.0), 100, 100, RngStream(7000 + i)) for i in range(200)])


@crit(7, "ambit slice table and field covariance")
def test_c7_stationary(rect_fields):
    # cells 10 apart share no slice, so these 100 cells are independent
    cells = rect_fields[:, 5::10, 5::10].reshape(len(rect_fields), -1)
    z = cells.mean(axis=0) / np.sqrt(1.0 / len(cells))
    assert stats.chi2(z.size).sf(np.sum(z**2)) > 1e-3
    assert stats.levene(*cells.T).pvalue > 1e-3


@crit(7, "ambit slice table and field covariance")
@pytest.mark.parametrize("dt,dx", [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)])
def test_c7_covariance(rect_table, rect_fields, dt, dx):
    i, j = int(round(dx / 0.5)), int(round(dt / 0.5))
    F = rect_fields
    prod = (F[:, : 100 - i, : 100 - j] * F[:, i:, j:]).mean(axis=(1, 2))
    want = field_autocovariance(RECT, dt, dx, 1.0)
    # the table's area error enters every covariance proportionally
    se = math.hypot(prod.std(ddof=1) / math.sqrt(len(prod)), want * rect_table.stderr[0] / 0.25)
    assert abs(prod.mean() - want) <= 4 * se


# -- 8 -------------------------------------------------------------------------

DELTAS = [0.1, 0.075, 0.05, 0.025]


@pytest.fixture(scope="module")
def gmm_medians():
    return gmm_experiment(DELTAS, 1000, k=1000, tau=0.15, true=(2.0, 3.0, 1.0), rng=RngStream(20260408))


@crit(8, "GMM recovery: grid errors shrink with delta, slice dominates")
@pytest.mark.xfail(strict=True, reason="theta-hat carries no grid bias; see ledger (criterion 8)")
def test_c8_full_contract(gmm_medians):
    grid = np.array([gmm_medians[f"grid:{d!r}"] for d in DELTAS])
    assert np.all(np.diff(grid, axis=0) < 0)
    assert np.all(gmm_medians["slice"] <= grid[-1])


@crit(8, "GMM recovery: grid errors shrink with delta, slice dominates")
def test_c8_attainable(gmm_medians, record_property):
    grid = np.array([gmm_medians[f"grid:{d!r}"] for d in DELTAS])
    record_property("detail", "k,lam medians " + " > ".join(f"{g[0]:.3f}/{g[2]:.3f}" for g in grid))
    assert np.all(np.diff(grid[:, 0]) < 0)  # k-hat
    assert np.all(np.diff(grid[:, 2]) < 0)  # lam-hat
    assert gmm_medians["slice"][2] <= grid[-1, 2]


# -- 9 -------------------------------------------------------------------------


@crit(9, "stable conditional parameters: constant case and alpha = 2")
@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.5, 2.0])
def test_c9_constant_case(alpha):
    seed = Stable(alpha, 0.3 if alpha < 2 else 0.0, 1.2, -0.4)
    geom = SliceGeometry.rectangle(0.0, 0.8, 0.0, 0.5)
    s = 0.4
    got = stable_conditional_params(Constant(1.0), None, geom, seed)
    assert (got.alpha, got.beta) == (alpha, pytest.approx(seed.beta, abs=1e-14))
    assert got.c == pytest.approx(1.2 * s ** (1 / alpha), rel=1e-12)
    assert got.mu == pytest.approx(-0.4 * s, rel=1e-12)


@crit(9, "stable conditional parameters: constant case and alpha = 2")
def test_c9_alpha_two():
    K = SpaceTimeMap(lambda tb, xb: np.cos(np.asarray(tb)) + np.asarray(xb))
    vol = VolatilityPath(0.0, 0.1, np.linspace(0.5, 2.0, 10))
    geom = SliceGeometry(0.0, 1.0, lambda t: 1.0 - 0.5 * np.asarray(t))
    seed = Stable(2.0, 0.0, 0.9, 0.3)
    p = stable_conditional_params(K, vol, geom, seed)
    i1, i2 = slice_kernel_integrals(K, vol, geom)
    assert abs(2 * p.c**2 - 2 * 0.81 * i2) <= 1e-10
    assert abs(p.mu - 0.3 * i1) <= 1e-10


# -- 10 ------------------------------------------------------------------------


@crit(10, "volatility-modulated pipeline matches the law of total variance")
def test_c10_total_variance(record_property):
    k, tau = 250, 0.5
    trawl = exponential(0.25)
    spec = VolTrawlSpec(LM, InverseGaussian(2.0, 1.0), step=0.1)

    def one(s):
        X, vol = simulate_vm_trawl(trawl, Constant(1.0), spec, Gaussian(1.0, 1.0), k, tau, s)
        # independent oracle: integrals of sigma and sigma^2 over each trawl set, cell by cell
        edges = vol.start + vol.step * np.arange(len(vol.sigma2) + 1)
        off = np.minimum(edges[None, :] - tau * np.arange(1, k + 1)[:, None], 0.0)
        # offsets share one grid, so G is needed at few distinct points
        vals, inv = np.unique(np.round(off, 10), return_inverse=True)
        G = np.array([trawl.cumulative(v) for v in vals])[inv.reshape(off.shape)]
        w = np.diff(G, axis=1)
        return X, w @ np.sqrt(vol.sigma2), w @ vol.sigma2

    runs = run_repetitions(one, 1000, RngStream(1000))
    X = np.array([r[0] for r in runs])
    I1 = np.array([r[1] for r in runs])
    I2 = np.array([r[2] for r in runs])
    n = len(X)
    c = n / (n - 1)
    # Var X = E[Var(X | sigma)] + Var(E[X | sigma]) with mu = sigma_L^2 = 1
    D = c * (X - X.mean(axis=0)) ** 2 - I2 - c * (I1 - I1.mean(axis=0)) ** 2
    d = D.mean(axis=1)
    total = float(np.mean(X.var(axis=0, ddof=1)))
    record_property("detail", f"mean Var X = {total:.3f}, gap {d.mean():+.4f} +- {d.std(ddof=1) / math.sqrt(n):.4f}")
    assert np.all(np.isfinite(X))
    assert within_se(d, 0.0)


# -- 11 ------------------------------------------------------------------------


@crit(11, "transform inversion: quantile round trip and Gamma(1.37, 2)")
def test_c11_exponential_round_trip():
    exp1 = LaplaceTransform(lambda s: 1.0 / (1.0 + s), mean=1.0)
    for u in np.linspace(0.01, 0.99, 25):
        x = inverse_cdf_sample(exp1, float(u))
        assert abs(-math.expm1(-x) - u) <= 1e-8


@crit(11, "transform inversion: quantile round trip and Gamma(1.37, 2)")
def test_c11_gamma_inversion(record_property):
    area = 0.6
    a = 1.37 * area
    x = sample_set_law(Gamma(1.37, 2.0), area, 3000, RngStream(1100), method="inversion")
    pdf = lambda v: v ** (a - 1) * math.exp(-v / 2.0) / (special.gamma(a) * 2.0**a)
    grid = np.sort(x)
    cdf = np.array([integrate.quad(pdf, 0.0, v, limit=200)[0] for v in grid])
    n = len(grid)
    ks = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    p = stats.kstwo(n).sf(ks)
    record_property("detail", f"KS p={p:.3g}")
    assert p > 1e-3


# -- 12 ------------------------------------------------------------------------

RUNS = [
    ["simulate", "--method", "slice", "--trawl", "exponential(1)", "--seed-dist", "gaussian(0,1)", "--k", "1000", "--tau", "0.5"],
    ["simulate", "--method", "slice", "--trawl", "long_memory(0.5,1.5)", "--seed-dist", "cauchy(1)", "--k", "300", "--tau", "0.5"],
    ["simulate", "--method", "grid", "--trawl", "triangle(-1)", "--seed-dist", "gamma(2,3)", "--k", "200", "--tau", "0.5", "--delta", "0.05"],
    ["simulate", "--method", "cpp", "--trawl", "exponential(1)", "--seed-dist", "gamma(2,0.5)", "--k", "200", "--tau", "0.5", "--eps", "0.01"],
    ["simulate", "--method", "vm", "--trawl", "exponential(0.25)", "--seed-dist", "gaussian(1,1)", "--kernel", "constant(1)",
     "--vol-trawl", "long_memory(0.5,1.5)", "--vol-seed", "ig(2,1)", "--vol-step", "0.1", "--k", "50", "--tau", "0.5"],
    ["simulate-field", "--trawl", "exponential(1)", "--seed-dist", "gamma(2,3)", "--kt", "20", "--ks", "10", "--tau", "0.5", "--dx", "0.5", "--n", "1e4"],
]


@crit(12, "same master seed gives byte-identical output at any thread count")
@pytest.mark.parametrize("args", RUNS, ids=["slice", "slice-lm", "grid", "cpp", "vm", "field"])
def test_c12_determinism(args, tmp_path):
    runner = CliRunner()
    outs = []
    for i, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"o{i}.csv"
        res = runner.invoke(cli_main, args + ["--rng", "12345", "--out", str(out)], env={"TRAWLKIT_THREADS": threads})
        assert res.exit_code == 0, res.output
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    other = tmp_path / "other.csv"
    runner.invoke(cli_main, args + ["--rng", "54321", "--out", str(other)])
    assert other.read_bytes() != outs[0]


@crit(12, "same master seed gives byte-identical output at any thread count")
def test_c12_repetitions_thread_independent():
    f = lambda s: simulate_slice(triangle(-1.0), Gamma(2.0, 3.0), 50, 0.2, s).tobytes()
    assert run_repetitions(f, 16, RngStream(12), threads=1) == run_repetitions(f, 16, RngStream(12), threads=4)
