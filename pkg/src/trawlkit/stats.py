"""Validation statistics: empirical ACF, moment fitting, convergence sweeps, law tests."""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as st

from .geometry import TrawlFunction, exponential
from .levy import (
    UNDEFINED,
    Cauchy,
    Gamma,
    Gaussian,
    InverseGaussian,
    LevySeed,
    Poisson,
    Skellam,
    Stable,
    is_defined,
)
from .rng import RngStream, as_stream


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get("TRAWLKIT_THREADS", "1")))


def run_repetitions(fn: Callable[[RngStream], object], n: int, rng=None, threads: int | None = None, label="rep"):
    """Call ``fn`` on n independent child streams; results come back in index order.

    Each repetition owns its stream, so the output does not depend on the
    number of threads.
    """
    streams = as_stream(rng).children(n, label)
    nt = thread_count(threads)
    if nt == 1 or n < 2:
        return [fn(s) for s in streams]
    with ThreadPoolExecutor(max_workers=nt) as ex:
        return list(ex.map(fn, streams))


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- autocorrelation -------------------------------------------------------


def empirical_acf(series, max_lag: int):
    """Biased sample autocorrelations r(1), ..., r(max_lag).

    Returns UNDEFINED for a constant series.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if max_lag < 1 or len(x) <= max_lag + 1:
        raise ValueError("series too short for the requested lags")
    d = x - x.mean()
    c0 = float(d @ d)
    if c0 <= 1e-300 * len(x):
        return UNDEFINED
    n = len(x)
    return np.array([float(d[: n - h] @ d[h:]) / c0 for h in range(1, max_lag + 1)])


# -- moment fitting ---------------------------------------------------------


@dataclass(frozen=True)
class GmmSpec:
    """Moment-matching targets for the Gamma-seed exponential trawl.

    The marginal is Gamma(k, theta) because phi(t) = lam e^{lam t} has unit
    area; lam comes from a least-squares fit of log r(h) = -lam h tau.
    """

    tau: float
    lags: tuple = (1, 3, 5)
    lam_bounds: tuple = (1e-8, 1e8)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if len(set(self.lags)) != len(self.lags) or min(self.lags) < 1:
            raise ValueError("lags must be positive and distinct")


@dataclass(frozen=True)
class GmmFit:
    k: float
    theta: float
    lam: float
    used_lags: tuple


def gmm_from_moments(m1: float, var: float, acf: dict, spec: GmmSpec) -> GmmFit:
    """Invert the forward map (k theta, k theta^2, e^{-lam h tau})."""
    if not (m1 > 0 and var > 0):
        raise ValueError("moment estimates must be positive for a Gamma marginal")
    theta = var / m1
    k = m1 / theta
    h = np.array([l for l in spec.lags if acf[l] > 0], dtype=float)
    if not len(h):
        raise ValueError("no positive autocorrelations at the requested lags")
    logs = np.log([acf[int(l)] for l in h])
    x = h * spec.tau
    lam = float(-(x @ logs) / (x @ x))
    lam = min(max(lam, spec.lam_bounds[0]), spec.lam_bounds[1])
    return GmmFit(k, theta, lam, tuple(int(l) for l in h))


def gmm_estimate(series, spec: GmmSpec) -> GmmFit:
    x = np.asarray(series, dtype=float)
    r = empirical_acf(x, max(spec.lags))
    if not is_defined(r):
        raise ValueError("constant series")
    return gmm_from_moments(float(x.mean()), float(x.var()), {l: r[l - 1] for l in spec.lags}, spec)


def gmm_forward(k: float, theta: float, lam: float, spec: GmmSpec) -> tuple[float, float, dict]:
    return k * theta, k * theta * theta, {l: math.exp(-lam * l * spec.tau) for l in spec.lags}


# -- set laws and distribution tests -----------------------------------------


def set_law(seed: LevySeed, area: float):
    """Frozen scipy law of L(A) for seeds with a closed form."""
    if isinstance(seed, Gaussian):
        if seed.sigma2 == 0:
            raise ValueError("degenerate Gaussian")
        return st.norm(seed.mu * area, math.sqrt(seed.sigma2 * area))
    if isinstance(seed, Poisson):
        return st.poisson(seed.nu * area)
    if isinstance(seed, Skellam):
        return st.skellam(seed.mu1 * area, seed.mu2 * area)
    if isinstance(seed, Gamma):
        return st.gamma(seed.shape * area, scale=seed.scale)
    if isinstance(seed, Cauchy):
        return st.cauchy(0.0, seed.gamma * area)
    if isinstance(seed, InverseGaussian):
        d = seed.delta * area
        return st.invgauss(1.0 / (seed.gamma * d), scale=d * d)
    if isinstance(seed, Stable):
        s = seed.scaled(area)
        return st.levy_stable(s.alpha, s.beta, loc=s.mu, scale=s.c)
    raise ValueError(f"no closed-form set law for {type(seed).__name__}")


@dataclass
class LawTest:
    statistic: float
    pvalue: float
    kind: str
    z_scores: list = field(default_factory=list)

    def passes(self, level: float = 1e-3) -> bool:
        return self.pvalue >= level


def _moment_z(x, law) -> list:
    """z-scores of the first four sample moments about the law's moments."""
    n = len(x)
    out = []
    for r in range(1, 5):
        try:
            with warnings.catch_warnings():
                # scipy integrates moments numerically for some laws; divergence shows up as nan
                warnings.simplefilter("ignore")
                mr = law.moment(r)
                m2r = law.moment(2 * r)
        except Exception:
            break
        if not (np.isfinite(mr) and np.isfinite(m2r)):
            break
        var = m2r - mr * mr
        if var <= 0:
            break
        out.append(float((np.mean(x**r) - mr) / math.sqrt(var / n)))
    return out


def distribution_tests(samples, law) -> LawTest:
    """KS test for continuous laws, chi-square on pooled cells for discrete ones."""
    x = np.asarray(samples, dtype=float)
    if hasattr(law.dist, "pmf"):
        lo, hi = law.ppf(1e-4), law.ppf(1 - 1e-4)
        support = np.arange(math.floor(lo), math.ceil(hi) + 1)
        p = law.pmf(support)
        # pool the tails into the end cells
        p[0] += law.cdf(support[0] - 1)
        p[-1] += law.sf(support[-1])
        obs = np.array([np.sum(x == v) for v in support], dtype=float)
        obs[0] += np.sum(x < support[0])
        obs[-1] += np.sum(x > support[-1])
        cells, ob, ex = [], 0.0, 0.0
        for o, e in zip(obs, p * len(x)):
            ob += o
            ex += e
            if ex >= 5:
                cells.append((ob, ex))
                ob = ex = 0.0
        if ex and cells:
            o_, e_ = cells.pop()
            cells.append((o_ + ob, e_ + ex))
        o_arr, e_arr = np.array(cells).T
        e_arr *= o_arr.sum() / e_arr.sum()
        stat, pv = st.chisquare(o_arr, e_arr)
        return LawTest(float(stat), float(pv), "chi2", _moment_z(x, law))
    res = st.kstest(x, law.cdf)
    return LawTest(float(res.statistic), float(res.pvalue), "ks", _moment_z(x, law))


# -- convergence sweeps -------------------------------------------------------


def loglog_slope(h, err) -> float:
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass
class ConvergenceReport:
    parameter: str
    rows: list  # (value, empirical, bound)
    slope: float
    config: dict

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.parameter},empirical,bound\n")
            for row in self.rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
            fh.write(f"# slope,{self.slope!r}\n# config_hash,{config_hash(self.config)}\n")


def convergence_experiment(kind: str, trawl: TrawlFunction, seed: LevySeed, values, n_rep: int = 0, rng=None, **kw):
    """Error metric against its theoretical counterpart over a parameter sweep.

    ``kind="grid"``: variance deficit 1 - included/total (exact, no sampling)
    against the area deficit; ``values`` are grid steps.
    ``kind="cpp"``: coupled E[(X - X^eps)^2] against truncation_mse over
    ``n_rep`` runs; ``values`` are eps levels; ``measure`` required.
    ``kind="slice"``: difference between two exact routes (slice vs Cholesky
    covariance), identically zero.
    """
    from .cpp import simulate_cpp_coupled, truncation_mse
    from .grid import GridConfig, included_area

    values = [float(v) for v in values]
    cfg = {"kind": kind, "trawl": repr(trawl), "seed": repr(seed), "values": values, "n_rep": n_rep}
    rows = []
    if kind == "grid":
        tau, k = kw.get("tau", 1.0), kw.get("k", 1)
        v = seed.variance()
        for d in values:
            T = kw.get("T", trawl.support_bound if trawl.bounded else -d**-0.5)
            g = GridConfig.from_delta(trawl, tau, k, T, d)
            deficit = trawl.total_area - included_area(trawl, g)
            rows.append((d, v * deficit, deficit))
    elif kind == "cpp":
        measure = kw["measure"]
        k, tau = kw.get("k", 1), kw.get("tau", 1.0)
        base = kw.get("eps_ref", min(values) / 8)
        levels = sorted(values + [base])

        def one(s):
            paths = simulate_cpp_coupled(trawl, measure, levels, k, tau, s)
            return [float(np.mean((paths[base] - paths[e]) ** 2)) for e in values]

        res = np.array(run_repetitions(one, n_rep, rng))
        for j, e in enumerate(values):
            # the reference level carries its own truncation error
            bound = truncation_mse(measure, e, trawl.total_area) - truncation_mse(measure, base, trawl.total_area)
            rows.append((e, float(res[:, j].mean()), bound))
    elif kind == "slice":
        for _ in values:
            rows.append((0.0, 0.0, 0.0))
        return ConvergenceReport("none", rows, 0.0, cfg)
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    slope = loglog_slope([r[0] for r in rows], [r[1] for r in rows]) if all(r[1] > 0 for r in rows) else float("nan")
    return ConvergenceReport("delta" if kind == "grid" else "eps", rows, slope, cfg)


def acf_experiment(trawl: TrawlFunction, seed: LevySeed, n_runs: int, k: int, tau: float, max_lag: int, rng=None):
    """Mean empirical ACF of slice-simulated paths next to the theoretical one."""
    from .geometry import autocorrelation
    from .slices import simulate_slice

    def one(s):
        r = empirical_acf(simulate_slice(trawl, seed, k, tau, s), max_lag)
        return r if is_defined(r) else np.full(max_lag, np.nan)

    emp = np.nanmean(np.array(run_repetitions(one, n_runs, rng)), axis=0)
    theo = np.array([autocorrelation(trawl, h * tau) for h in range(1, max_lag + 1)])
    return emp, theo


def gmm_experiment(
    deltas, n_rep: int, k: int = 1000, tau: float = 0.15, true=(2.0, 3.0, 1.0), rng=None, T: float | None = None
):
    """Median relative errors of (k, theta, lam) fitted to grid and slice paths.

    Returns {method: (median |rel err| per parameter)} with methods
    "grid:<delta>" and "slice". The grid truncation defaults to T = -delta^{-1/2}.
    """
    from .grid import GridConfig, simulate_grid
    from .slices import simulate_slice

    kk, th, lam = true
    trawl = exponential(lam)
    seed = Gamma(kk, th)
    spec = GmmSpec(tau)
    stream = as_stream(rng)
    truth = np.array(true)
    out = {}

    def fit_err(x):
        f = gmm_estimate(x, spec)
        return np.abs(np.array([f.k, f.theta, f.lam]) - truth) / truth

    for d in deltas:
        cfg = GridConfig.from_delta(trawl, tau, k, -(d**-0.5) if T is None else T, d)
        errs = run_repetitions(lambda s: fit_err(simulate_grid(trawl, seed, cfg, s)), n_rep, stream.child(f"grid{d!r}"))
        out[f"grid:{d!r}"] = np.median(np.array(errs), axis=0)
    errs = run_repetitions(lambda s: fit_err(simulate_slice(trawl, seed, k, tau, s)), n_rep, stream.child("slice"))
    out["slice"] = np.median(np.array(errs), axis=0)
    return out
