"""Kernel-weighted and volatility-modulated trawl processes.

X_t = integral over A_t of K_t(tbar, xbar) sigma(tbar) L(dtbar, dxbar).

Slice values are drawn from their conditional laws given sigma: Gaussian
seeds need the two integrals of K sigma and K^2 sigma^2 over each slice,
stable seeds need the integrals of |K sigma|^alpha (signed and unsigned).
Kernels that depend on the observation time t are handled through a
separable form sum_m f_m(t) h_m(tbar, xbar), so slice draws are reused
across all trawls containing the slice.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .cpp import sample_atoms_bounded, sample_atoms_unbounded
from .geometry import TrawlFunction, _row_to_trawls
from .levy import Gaussian, LevyMeasure, LevySeed, Stable, chambers_mallows_stuck, levy_ito_split
from .rng import RngStream, as_stream

_GL_T = np.polynomial.legendre.leggauss(8)
_GL_X = np.polynomial.legendre.leggauss(8)


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Base class; ``terms()`` gives the separable form [(f, h), ...]."""

    x_free = True
    t_free = True

    def terms(self) -> list[tuple[Callable, Callable]]:
        raise NotImplementedError(f"{type(self).__name__} has no separable form")

    def __call__(self, t, tbar, xbar):
        tbar = np.asarray(tbar, dtype=float)
        out = np.zeros(np.broadcast(tbar, np.asarray(xbar)).shape)
        for f, h in self.terms():
            out = out + f(np.asarray(t, dtype=float)) * h(tbar, xbar)
        return out


def _one(t):
    return np.ones_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Constant(Kernel):
    value: float = 1.0

    def terms(self):
        v = float(self.value)
        return [(_one, lambda tb, xb: np.full(np.shape(tb), v))]


@dataclass(frozen=True)
class SpaceTimeMap(Kernel):
    """K(tbar, xbar) without dependence on t; ``x_free`` marks K(tbar)."""

    func: Callable
    x_free: bool = False

    def terms(self):
        if self.x_free:
            return [(_one, lambda tb, xb: np.asarray(self.func(tb), dtype=float) * np.ones(np.shape(xb)))]
        return [(_one, lambda tb, xb: np.asarray(self.func(tb, xb), dtype=float))]


@dataclass(frozen=True)
class Separable(Kernel):
    """K_t(tbar, xbar) = sum_m f_m(t) h_m(tbar, xbar)."""

    parts: tuple
    x_free: bool = True
    t_free = False

    def terms(self):
        return list(self.parts)


@dataclass(frozen=True)
class TimeShifted(Kernel):
    """K_t(tbar) = g(tbar - t).

    ``waves`` lists (coef, lam, omega, phase) with
    g(u) = sum coef e^{lam u} cos(omega u + phase); such g are separable.
    A bare callable ``g`` is accepted but cannot be reduced.
    """

    g: Callable | None = None
    waves: tuple = ()
    t_free = False

    def __post_init__(self):
        if self.g is None and not self.waves:
            raise ValueError("TimeShifted needs g or waves")

    @classmethod
    def exponential(cls, lam: float, coef: float = 1.0) -> "TimeShifted":
        return cls(waves=((coef, lam, 0.0, 0.0),))

    @classmethod
    def cosine(cls, omega: float = 1.0, coef: float = 1.0) -> "TimeShifted":
        return cls(waves=((coef, 0.0, omega, 0.0),))

    @classmethod
    def sine(cls, omega: float = 1.0, coef: float = 1.0) -> "TimeShifted":
        return cls(waves=((coef, 0.0, omega, -math.pi / 2),))

    @classmethod
    def constant(cls, value: float) -> "TimeShifted":
        return cls(waves=((value, 0.0, 0.0, 0.0),))

    def shape(self, u):
        u = np.asarray(u, dtype=float)
        if self.g is not None and not self.waves:
            return np.asarray(self.g(u), dtype=float)
        out = np.zeros_like(u)
        for c, lam, om, ph in self.waves:
            out = out + c * np.exp(lam * u) * np.cos(om * u + ph)
        return out

    def __call__(self, t, tbar, xbar=None):
        return self.shape(np.asarray(tbar, dtype=float) - np.asarray(t, dtype=float))

    def terms(self):
        return reduce_separable(self).terms()


def reduce_separable(kernel: TimeShifted) -> Separable:
    """Rewrite g(tbar - t) as sum_m f_m(t) h_m(tbar).

    Each wave e^{lam u} cos(omega u + phase) with u = tbar - t splits as
    e^{-lam t} cos(omega t) e^{lam tbar} cos(omega tbar + phase)
    + e^{-lam t} sin(omega t) e^{lam tbar} sin(omega tbar + phase).
    """
    if isinstance(kernel, (Constant, Separable)):
        return Separable(tuple(kernel.terms()))
    if not isinstance(kernel, TimeShifted) or not kernel.waves:
        raise NotImplementedError("kernel is not separable; approximate it with fourier_coefficients")
    parts = []
    for c, lam, om, ph in kernel.waves:
        parts.append(
            (
                lambda t, c=c, lam=lam, om=om: c * np.exp(-lam * np.asarray(t)) * np.cos(om * np.asarray(t)),
                lambda tb, xb, lam=lam, om=om, ph=ph: np.exp(lam * np.asarray(tb)) * np.cos(om * np.asarray(tb) + ph),
            )
        )
        if om != 0.0:
            parts.append(
                (
                    lambda t, c=c, lam=lam, om=om: c * np.exp(-lam * np.asarray(t)) * np.sin(om * np.asarray(t)),
                    lambda tb, xb, lam=lam, om=om, ph=ph: np.exp(lam * np.asarray(tb))
                    * np.sin(om * np.asarray(tb) + ph),
                )
            )
    return Separable(tuple(parts))


@dataclass(frozen=True)
class Fourier(TimeShifted):
    """g(u) ~ e^{lam u} (a_0 + sum_n a_n cos(n pi u / tau)).

    ``l2_error`` is the L2 norm on the fitting interval of the residual of
    e^{-lam u} g(u) after projection.
    """

    lam: float = 0.0
    coeffs: tuple = ()
    tau: float = 1.0
    l2_error: float = 0.0

    def __post_init__(self):
        waves = tuple((a, self.lam, n * math.pi / self.tau, 0.0) for n, a in enumerate(self.coeffs) if a != 0.0)
        object.__setattr__(self, "waves", waves or ((0.0, 0.0, 0.0, 0.0),))


def fourier_coefficients(g: Callable, tau: float, lam: float, N: int, interval: tuple | None = None) -> Fourier:
    """Project e^{-lam u} g(u) on cos(n pi u / tau), n = 0..N, over an interval of length tau.

    The interval defaults to [0, tau]; any [m tau, (m + 1) tau] keeps the
    cosines orthogonal.
    """
    a, b = interval if interval is not None else (0.0, tau)
    if abs((b - a) - tau) > 1e-12 * tau or abs(a / tau - round(a / tau)) > 1e-9:
        raise ValueError("interval must be [m tau, (m + 1) tau]")
    w = lambda u: math.exp(-lam * u) * float(g(u))
    coeffs = []
    for n in range(N + 1):
        val = integrate.quad(lambda u: w(u) * math.cos(n * math.pi * u / tau), a, b, limit=200, epsabs=1e-13)[0]
        coeffs.append(val / tau if n == 0 else 2.0 * val / tau)
    norm2 = integrate.quad(lambda u: w(u) ** 2, a, b, limit=200, epsabs=1e-14)[0]
    # Parseval on the interval: ||w||^2 = tau (a0^2 + sum a_n^2 / 2) + residual
    captured = tau * (coeffs[0] ** 2 + 0.5 * sum(c * c for c in coeffs[1:]))
    err = math.sqrt(max(norm2 - captured, 0.0))
    if N == 0:
        probe = [w(a + f * tau) for f in (0.1, 0.5, 0.9)]
        if max(probe) - min(probe) > 1e-12 * (1 + abs(max(probe))):
            warnings.warn("N = 0 cannot represent a nonconstant kernel", RuntimeWarning, stacklevel=2)
    return Fourier(lam=lam, coeffs=tuple(coeffs), tau=tau, l2_error=err)


# ---------------------------------------------------------------------------
# volatility


@dataclass(frozen=True)
class VolatilityPath:
    """sigma^2 constant on cells [start + j step, start + (j + 1) step)."""

    start: float
    step: float
    sigma2: np.ndarray
    source: str = "user"

    def __post_init__(self):
        s = np.asarray(self.sigma2, dtype=float)
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("sigma^2 must be finite and nonnegative")
        object.__setattr__(self, "sigma2", s)

    @property
    def end(self) -> float:
        return self.start + self.step * len(self.sigma2)

    def sigma(self, t) -> np.ndarray:
        j = np.floor((np.asarray(t, dtype=float) - self.start) / self.step).astype(np.int64)
        if np.any(j < 0) or np.any(j >= len(self.sigma2)):
            raise ValueError("time outside the volatility grid")
        return np.sqrt(self.sigma2[j])

    def nodes(self, a: float, b: float):
        """Cell midpoints in (a, b] and their weights, clipped to the grid."""
        lo = max(a, self.start)
        hi = min(b, self.end)
        if hi <= lo:
            return np.empty(0), np.empty(0)
        j0 = int(math.floor((lo - self.start) / self.step + 1e-9))
        j1 = int(math.ceil((hi - self.start) / self.step - 1e-9))
        j = np.arange(j0, j1)
        cl = np.maximum(self.start + j * self.step, lo)
        cr = np.minimum(self.start + (j + 1) * self.step, hi)
        return 0.5 * (cl + cr), cr - cl


@dataclass(frozen=True)
class VolTrawlSpec:
    """sigma^2 as a trawl process with a nonnegative seed, simulated on a fine grid.

    ``rel_tail`` is the share of the modulated trawl's area left out below
    the start of the grid.
    """

    trawl: TrawlFunction
    seed: LevySeed
    step: float = 0.05
    rel_tail: float = 1e-3


def simulate_volatility(
    spec: VolTrawlSpec, t0: float, t1: float, rng=None, n_trunc: int | None = None, over: TrawlFunction | None = None
) -> VolatilityPath:
    """sigma^2 on [start, t1].

    ``over`` is the trawl that sigma is integrated over; start lies below t0
    by its support bound, or by the point beyond which its tail holds
    ``rel_tail`` of its area. Without ``over`` the path starts at t0. The
    slice simulation of sigma^2 is stationary from its first value, so no
    burn-in is needed.
    """
    from .slices import simulate_slice

    step = spec.step
    if over is None:
        back = 0.0
    else:
        back = over.support_bound if over.bounded else over.horizon(spec.rel_tail)
    start = math.floor((t0 + back) / step) * step
    n = int(math.ceil((t1 - start) / step - 1e-9)) + 1  # one cell past t1 so sigma(t1) exists
    vals = simulate_slice(spec.trawl, spec.seed, n, step, rng, n_trunc=n_trunc)
    return VolatilityPath(start, step, np.maximum(vals, 0.0), source="simulated trawl process")


# ---------------------------------------------------------------------------
# slice integrals


@dataclass
class SliceGeometry:
    """Region t_lo < tbar <= t_hi, lower(tbar) < xbar < upper(tbar)."""

    t_lo: float
    t_hi: float
    upper: Callable
    lower: Callable = field(default=lambda t: np.zeros(np.shape(t)))

    @classmethod
    def rectangle(cls, t_lo, t_hi, x_lo, x_hi):
        return cls(t_lo, t_hi, lambda t: np.full(np.shape(t), float(x_hi)), lambda t: np.full(np.shape(t), float(x_lo)))

    @classmethod
    def trawl_slice(cls, trawl: TrawlFunction, tau: float, i: int, c: int, last: bool = False):
        """Slice (i, c): time band c, inside trawls c..c+i-1 only.

        ``last`` drops the lower boundary (staircase slices ending at trawl k).
        """
        t_lo = (c - 1) * tau if c > 1 else (tau + trawl.horizon(1e-14) if not trawl.bounded else tau + trawl.support_bound)
        up = lambda t: trawl(np.asarray(t) - (c + i - 1) * tau)
        lo = (lambda t: np.zeros(np.shape(t))) if last else (lambda t: trawl(np.asarray(t) - (c + i) * tau))
        return cls(t_lo, c * tau, up, lo)


def _time_nodes(a: float, b: float, vol: VolatilityPath | None, geometric: bool = False, panels: int = 4):
    if vol is not None:
        return vol.nodes(a, b)
    if geometric:
        span = b - a
        edges = b - np.concatenate([[0.0], span * np.geomspace(1e-6, 1.0, 12 * panels)])[::-1]
    else:
        edges = np.linspace(a, b, panels + 1)
    x, w = _GL_T
    L, R = edges[:-1, None], edges[1:, None]
    t = (0.5 * (R - L) * x + 0.5 * (R + L)).ravel()
    wt = (0.5 * (R - L) * w).ravel()
    return t, wt


def _x_integral(func, tbar, y, x_free):
    """Integral over xbar in [0, y] of func(tbar, xbar); tbar, y broadcast."""
    if x_free:
        return func(tbar, np.zeros_like(y)) * y
    x, w = _GL_X
    xs = 0.5 * y[..., None] * (x + 1.0)
    return np.sum(func(tbar[..., None], xs) * w, axis=-1) * 0.5 * y


def slice_kernel_integrals(kernel: Kernel, vol: VolatilityPath | None, geom: SliceGeometry, t: float | None = None):
    """(integral of K sigma, integral of K^2 sigma^2) over one slice.

    Time is integrated on the volatility cells (midpoint rule) when a path
    is given, else by composite Gauss-Legendre; space is exact for x-free
    kernels and Gauss-Legendre otherwise.
    """
    if not kernel.t_free and t is None:
        raise ValueError("t-dependent kernel needs the observation time t")
    tt = 0.0 if t is None else t
    tn, wn = _time_nodes(geom.t_lo, geom.t_hi, vol, geometric=not math.isfinite(geom.t_lo))
    sig = vol.sigma(tn) if vol is not None else np.ones_like(tn)
    up, lo = geom.upper(tn), geom.lower(tn)
    K = lambda tb, xb: kernel(tt, tb, xb)
    K2 = lambda tb, xb: kernel(tt, tb, xb) ** 2
    i1 = _x_integral(K, tn, up, kernel.x_free) - _x_integral(K, tn, lo, kernel.x_free)
    i2 = _x_integral(K2, tn, up, kernel.x_free) - _x_integral(K2, tn, lo, kernel.x_free)
    r1, r2 = float(np.sum(wn * sig * i1)), float(np.sum(wn * sig * sig * i2))
    if not (math.isfinite(r1) and math.isfinite(r2)):
        raise ArithmeticError("slice integrals are not finite")
    return r1, r2


def _enumerate_bands(trawl: TrawlFunction, tau: float, k: int):
    """Yield (c, rows) with the rows i present in band c."""
    if trawl.bounded:
        I = max(1, math.ceil(-trawl.support_bound / tau - 1e-12))
        for c in range(1, k + 1):
            yield c, I
    else:
        for c in range(1, k + 1):
            yield c, k + 1 - c


def _band_integrals(trawl, tau, k, c, rows, integrands, x_free, vol):
    """Integrals of each integrand over slices (1..rows, c).

    Returns an array (rows, P). ``integrands`` are maps (tbar, xbar, sigma).
    """
    if c > 1:
        a = (c - 1) * tau
        geometric = False
    else:
        a = tau + (trawl.support_bound if trawl.bounded else trawl.horizon(1e-14))
        geometric = not trawl.bounded
    tn, wn = _time_nodes(a, c * tau, vol, geometric)
    sig = vol.sigma(tn) if vol is not None else np.ones_like(tn)
    m = c + np.arange(rows + 1)  # heights phi(tbar - m tau)
    Y = trawl(tn[:, None] - m[None, :] * tau)
    if not trawl.bounded:
        Y[:, -1] = 0.0  # staircase rows end at trawl k
        if c + rows - 1 != k:
            raise AssertionError
    out = np.empty((rows, len(integrands)))
    T = np.broadcast_to(tn[:, None], Y.shape)
    S = np.broadcast_to(sig[:, None], Y.shape)
    for p, f in enumerate(integrands):
        H = _x_integral(lambda tb, xb: f(tb, xb, S if np.ndim(tb) == 2 else S[..., None]), T, Y, x_free)
        out[:, p] = wn @ (H[:, :-1] - H[:, 1:])
    return out


def _aggregate(values_by_band, k):
    """values_by_band[c-1] is (rows, ...) for slices (i, c); returns trawl sums (k, ...)."""
    tail = values_by_band[0].shape[1:]
    out = np.zeros((k,) + tail)
    rows_max = max(v.shape[0] for v in values_by_band)
    for i in range(1, rows_max + 1):
        # bands holding row i form a prefix c = 1, 2, ...
        row = np.stack([v[i - 1] for v in values_by_band if v.shape[0] >= i]).reshape(-1, int(np.prod(tail, dtype=int)))
        for j in range(row.shape[1]):
            out.reshape(k, -1)[:, j] += _row_to_trawls(row[:, j], i, k)
    return out


def _separable_parts(kernel: Kernel):
    if isinstance(kernel, TimeShifted):
        kernel = reduce_separable(kernel)
    return kernel.terms()


def slice_moment_table(trawl, kernel, vol, tau, k, power_pairs=True):
    """Per-slice first and second kernel moments for the separable parts.

    Returns (f_values (k, M), bands) where bands[c-1] = (mean (rows, M),
    second (rows, M, M)).
    """
    parts = _separable_parts(kernel)
    M = len(parts)
    hs = [h for _, h in parts]
    integrands = [lambda tb, xb, s, h=h: h(tb, xb) * s for h in hs]
    pairs = [(a, b) for a in range(M) for b in range(a, M)]
    integrands += [lambda tb, xb, s, a=a, b=b: hs[a](tb, xb) * hs[b](tb, xb) * s * s for a, b in pairs]
    bands = []
    for c, rows in _enumerate_bands(trawl, tau, k):
        vals = _band_integrals(trawl, tau, k, c, rows, integrands, kernel.x_free, vol)
        mean = vals[:, :M]
        sec = np.zeros((rows, M, M))
        for p, (a, b) in enumerate(pairs):
            sec[:, a, b] = sec[:, b, a] = vals[:, M + p]
        bands.append((mean, sec))
    times = tau * np.arange(1, k + 1)
    F = np.column_stack([np.broadcast_to(f(times), (k,)) for f, _ in parts])
    return F, bands


def _mvn_draws(mean, cov, gen):
    """One draw per row from N(mean[r], cov[r]) using a symmetric square root."""
    w, V = np.linalg.eigh(cov)
    root = V * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
    z = gen.standard_normal(mean.shape)
    return mean + np.einsum("rij,rj->ri", root, z)


def simulate_kw_gaussian(
    trawl: TrawlFunction,
    kernel: Kernel,
    vol: VolatilityPath | None,
    seed: Gaussian,
    k: int,
    tau: float,
    rng=None,
) -> np.ndarray:
    """Kernel-weighted (optionally volatility-modulated) Gaussian trawl path.

    Each slice S draws the vector (integral over S of h_m sigma dL)_m jointly
    Gaussian with mean mu int h_m sigma and covariance sigma^2 int h_a h_b
    sigma^2; X(l tau) = sum_m f_m(l tau) times the sum over slices in A_{l tau}.
    """
    if not isinstance(seed, Gaussian):
        raise TypeError("Gaussian seed required")
    gen = as_stream(rng).generator
    F, bands = slice_moment_table(trawl, kernel, vol, tau, k)
    draws = [_mvn_draws(seed.mu * m, seed.sigma2 * s, gen) for m, s in bands]
    Z = _aggregate(draws, k)  # (k, M)
    return np.sum(F * Z, axis=1)


def stable_conditional_params(
    kernel: Kernel, vol: VolatilityPath | None, geom: SliceGeometry, seed: Stable, t: float | None = None
) -> Stable:
    """Law of the integral over one slice of K sigma dL for a stable seed, given sigma."""
    a = seed.alpha
    tt = 0.0 if t is None else t
    # |K sigma|^alpha has kinks where K changes sign; finer panels keep them small
    tn, wn = _time_nodes(geom.t_lo, geom.t_hi, vol, geometric=not math.isfinite(geom.t_lo), panels=256)
    sig = vol.sigma(tn) if vol is not None else np.ones_like(tn)
    up, lo = geom.upper(tn), geom.lower(tn)

    def integ(g):
        f = lambda tb, xb: g(kernel(tt, tb, xb) * (sig if np.ndim(tb) == 1 else sig[:, None]))
        return float(np.sum(wn * (_x_integral(f, tn, up, kernel.x_free) - _x_integral(f, tn, lo, kernel.x_free))))

    return _stable_from_integrals(seed, integ)


def _stable_from_integrals(seed: Stable, integ) -> Stable:
    a = seed.alpha
    i_abs = integ(lambda v: np.abs(v) ** a)
    if not (math.isfinite(i_abs) and i_abs > 0):
        raise ArithmeticError("integral of |K sigma|^alpha is zero or divergent")
    i_sgn = integ(lambda v: np.sign(v) * np.abs(v) ** a)
    i_one = integ(lambda v: v)
    c_t = seed.c * i_abs ** (1.0 / a)
    beta_t = float(np.clip(seed.beta * i_sgn / i_abs, -1.0, 1.0))
    mu_t = seed.mu * i_one
    if a == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            i_log = integ(lambda v: np.where(v != 0, v * np.log(np.abs(np.where(v != 0, v, 1.0))), 0.0))
        mu_t -= (2.0 / math.pi) * seed.beta * seed.c * i_log
    return Stable(a, beta_t, c_t, mu_t)


def simulate_kw_stable(trawl, kernel, vol, seed: Stable, k, tau, rng=None) -> np.ndarray:
    """Stable seed with a t-free kernel: one conditional stable draw per slice."""
    if not kernel.t_free:
        raise NotImplementedError("stable conditional laws need a kernel without t dependence")
    gen = as_stream(rng).generator
    a = seed.alpha
    K = lambda tb, xb: kernel(0.0, tb, xb)
    integrands = [
        lambda tb, xb, s: np.abs(K(tb, xb) * s) ** a,
        lambda tb, xb, s: np.sign(K(tb, xb) * s) * np.abs(K(tb, xb) * s) ** a,
        lambda tb, xb, s: K(tb, xb) * s,
    ]
    if a == 1.0:
        def _vlogv(tb, xb, s):
            v = K(tb, xb) * s
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(v != 0, v * np.log(np.abs(np.where(v != 0, v, 1.0))), 0.0)

        integrands.append(_vlogv)
    draws = []
    for c, rows in _enumerate_bands(trawl, tau, k):
        vals = _band_integrals(trawl, tau, k, c, rows, integrands, kernel.x_free, vol)
        i_abs, i_sgn, i_one = vals[:, 0], vals[:, 1], vals[:, 2]
        live = i_abs > 0
        c_t = seed.c * np.where(live, i_abs, 0.0) ** (1.0 / a)
        with np.errstate(invalid="ignore", divide="ignore"):
            beta_t = np.clip(np.where(live, seed.beta * i_sgn / np.where(live, i_abs, 1.0), 0.0), -1, 1)
        mu_t = seed.mu * i_one
        if a == 1.0:
            mu_t = mu_t - (2.0 / math.pi) * seed.beta * seed.c * vals[:, 3]
        z = chambers_mallows_stuck(a, beta_t, beta_t.shape, gen)
        shift = np.where(c_t > 0, (2.0 / math.pi) * beta_t * c_t * np.log(np.where(c_t > 0, c_t, 1.0)), 0.0) if a == 1.0 else 0.0
        draws.append((c_t * z + mu_t + shift)[:, None])
    return _aggregate(draws, k)[:, 0]


def kernel_trawl_integrals(trawl, kernel, vol, tau, k) -> np.ndarray:
    """Integral of K_{l tau} sigma over A_{l tau}, l = 1..k."""
    F, bands = slice_moment_table(trawl, kernel, vol, tau, k)
    Z = _aggregate([m for m, _ in bands], k)
    return np.sum(F * Z, axis=1)


def membership_pairs(trawl: TrawlFunction, t, x, k: int, tau: float):
    """All (atom, trawl) pairs with the atom inside A_{l tau}; trawl index from 0."""
    t, x = np.asarray(t), np.asarray(x)
    l0 = np.maximum(np.ceil(t / tau - 1e-12).astype(np.int64) - 1, 0)
    atoms, trawls = [], []
    idx = np.arange(len(t))
    cur = l0.copy()
    while len(idx):
        cur_i = cur[idx]
        ok = (cur_i < k) & (x[idx] < trawl(t[idx] - (cur_i + 1) * tau))
        atoms.append(idx[ok])
        trawls.append(cur_i[ok])
        idx = idx[ok]
        cur[idx] += 1
    a = np.concatenate(atoms) if atoms else np.empty(0, dtype=np.int64)
    b = np.concatenate(trawls) if trawls else np.empty(0, dtype=np.int64)
    order = np.lexsort((b, a))
    return a[order], b[order]


def simulate_kw_jump(
    trawl: TrawlFunction,
    kernel: Kernel,
    vol: VolatilityPath | None,
    measure: LevyMeasure | None,
    eps: float,
    k: int,
    tau: float,
    rng=None,
    atoms=None,
) -> np.ndarray:
    """Sum over atoms in A_{l tau} with |y| > eps of y K_{l tau}(t_i, x_i) sigma(t_i),
    minus xi~ times the integral of K sigma over the trawl."""
    if atoms is None:
        sampler = sample_atoms_bounded if trawl.bounded else sample_atoms_unbounded
        atoms = sampler(trawl, measure, k, tau, rng, eps)
    out = np.zeros(k)
    if len(atoms):
        ai, li = membership_pairs(trawl, atoms.t, atoms.x, k, tau)
        sig = vol.sigma(atoms.t[ai]) if vol is not None else 1.0
        vals = atoms.y[ai] * kernel(tau * (li + 1), atoms.t[ai], atoms.x[ai]) * sig
        np.add.at(out, li, vals)
    comp = 0.0 if measure is None else measure.compensator_outside(eps)
    if comp != 0.0:
        out -= comp * kernel_trawl_integrals(trawl, kernel, vol, tau, k)
    return out


def simulate_vm_trawl(
    trawl: TrawlFunction,
    kernel: Kernel,
    vol,
    seed: LevySeed,
    k: int,
    tau: float,
    rng=None,
    eps: float = 0.0,
    vol_trunc: int | None = None,
):
    """Two stages: sigma^2 path first, then X given sigma.

    ``vol`` is a :class:`VolatilityPath`, a :class:`VolTrawlSpec` or None
    (sigma = 1). Gaussian and stable seeds are drawn slice by slice; other
    seeds are split into a Gaussian part and a compound Poisson jump part.
    Returns (X, sigma^2 path).
    """
    stream = as_stream(rng)
    if isinstance(vol, VolTrawlSpec):
        vol = simulate_volatility(vol, tau, k * tau, stream.child("vol"), n_trunc=vol_trunc, over=trawl)
    if isinstance(seed, Stable):
        X = simulate_kw_stable(trawl, kernel, vol, seed, k, tau, stream.child("x"))
    elif isinstance(seed, Gaussian):
        X = simulate_kw_gaussian(trawl, kernel, vol, seed, k, tau, stream.child("x"))
    else:
        g, j = levy_ito_split(seed)
        X = simulate_kw_gaussian(trawl, kernel, vol, g, k, tau, stream.child("x"))
        X = X + simulate_kw_jump(trawl, kernel, vol, j.measure, eps, k, tau, stream.child("jumps"))
    return X, vol
