"""Trawl functions, set areas, overlaps and slice-area plans."""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

# slices smaller than this fraction of Leb(A) are treated as empty
AREA_GUARD = 1e-14


class DivergentIntegral(ValueError):
    pass


class TrawlFunction:
    """Monotone trawl function phi on (-inf, 0].

    Parameters
    ----------
    phi : callable
        Vectorised height function, nondecreasing in t on (-inf, 0].
    support_bound : float, optional
        T < 0 with phi(t) = 0 for t < T.
    cumulative : callable, optional
        Closed form of G(t) = integral of phi over (-inf, t]. It is an
        antiderivative of phi normalised to vanish at -inf.
    inverse : callable, optional
        Closed form of phi^{-1} on (0, phi(0)].
    cumulative_inverse : callable, optional
        Closed form of G^{-1} on (0, Leb(A)].
    """

    def __init__(
        self,
        phi: Callable,
        support_bound: float | None = None,
        cumulative: Callable | None = None,
        inverse: Callable | None = None,
        cumulative_inverse: Callable | None = None,
        name: str = "custom",
        check: bool = True,
    ):
        if support_bound is not None and not support_bound < 0:
            raise ValueError("support bound must be negative")
        self._phi = phi
        self.support_bound = None if support_bound is None else float(support_bound)
        self._cumulative = cumulative
        self._inverse = inverse
        self._cum_inverse = cumulative_inverse
        self.name = name
        self._lock = threading.Lock()
        self._area: float | None = None
        self._band_cache: dict[tuple[float, float], float] = {}
        self.height = float(self(0.0))
        if not (self.height > 0 and math.isfinite(self.height)):
            raise ValueError("phi(0) must be positive and finite")
        if check:
            self._check_monotone()

    def __repr__(self):
        return f"TrawlFunction({self.name})"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            v = np.asarray(self._phi(np.minimum(t, 0.0)), dtype=float)
        v = np.where(t > 0, 0.0, v)
        if self.support_bound is not None:
            v = np.where(t < self.support_bound, 0.0, v)
        return v if v.ndim else float(v)

    @property
    def bounded(self) -> bool:
        return self.support_bound is not None

    def _check_monotone(self):
        lo = self.support_bound if self.bounded else -50.0
        grid = np.concatenate([np.linspace(lo, 0.0, 513), -np.geomspace(1e3, 1e-6, 64)])
        grid = np.sort(grid[grid >= lo])
        v = self(grid)
        if np.any(v < 0) or np.any(np.diff(v) < -1e-12 * self.height):
            raise ValueError("phi must be nonnegative and nondecreasing on (-inf, 0]")

    # -- integrals --------------------------------------------------------

    def _quad(self, a, b):
        if b <= a:
            return 0.0
        return float(integrate.quad(lambda s: float(self(s)), a, b, limit=400, epsabs=1e-14, epsrel=1e-12)[0])

    def _tail_quad(self, t):
        """Integral of phi over (-inf, t] for an unbounded trawl."""
        # u = 1/(1 - (s - t)) maps (-inf, t] onto (0, 1]
        f = lambda u: float(self(t + 1.0 - 1.0 / u)) / (u * u) if u > 0 else 0.0
        val = float(integrate.quad(f, 0.0, 1.0, limit=400, epsabs=1e-14, epsrel=1e-12)[0])
        # divergence check: successive decades of tail mass must shrink
        d = [self._quad(t - 10.0 ** (e + 2), t - 10.0**e) for e in (2, 4, 6)]
        if d[1] > 0 and d[2] > 0.9 * d[1]:
            raise DivergentIntegral("integral of phi over the tail does not converge")
        return val

    def cumulative(self, t: float) -> float:
        """G(t), the integral of phi over (-inf, t] for t <= 0."""
        t = min(float(t), 0.0)
        if self._cumulative is not None:
            return float(self._cumulative(t))
        if self.bounded:
            return self._quad(self.support_bound, t) if t > self.support_bound else 0.0
        return self._tail_quad(t)

    def band(self, a: float, b: float) -> float:
        """Integral of phi over [a, b], cached when computed numerically."""
        a, b = min(a, 0.0), min(b, 0.0)
        if b <= a:
            return 0.0
        if self._cumulative is not None:
            return float(self._cumulative(b) - self._cumulative(a))
        key = (a, b)
        hit = self._band_cache.get(key)
        if hit is None:
            lo = max(a, self.support_bound) if self.bounded else a
            hit = self._quad(lo, b) if lo < b else 0.0
            self._band_cache[key] = hit
        return hit

    @property
    def total_area(self) -> float:
        if self._area is None:
            with self._lock:
                if self._area is None:
                    a = self.cumulative(0.0)
                    if not (a > 0 and math.isfinite(a)):
                        raise DivergentIntegral("trawl set has no finite positive area")
                    self._area = a
        return self._area

    # -- inverses ---------------------------------------------------------

    def inverse(self, x: float) -> float:
        """Smallest t <= 0 with phi(t) >= x, for 0 < x <= phi(0)."""
        if not 0 < x <= self.height:
            raise ValueError("height outside (0, phi(0)]")
        if self._inverse is not None:
            return float(self._inverse(x))
        lo = self.support_bound if self.bounded else -1.0
        while not self.bounded and self(lo) >= x:
            lo *= 2.0
            if lo < -1e12:
                raise ValueError("phi^{-1} not found")
        if self(lo) >= x:
            return lo
        return float(optimize.brentq(lambda t: self(t) - x, lo, 0.0, xtol=1e-14, rtol=1e-14))

    def cumulative_inverse_many(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self._cum_inverse is not None:
            return np.minimum(np.asarray(self._cum_inverse(v), dtype=float), 0.0)
        return np.array([self.cumulative_inverse(x) for x in v.ravel()]).reshape(v.shape)

    def cumulative_inverse(self, v: float) -> float:
        """t with G(t) = v, for 0 < v <= Leb(A)."""
        if self._cum_inverse is not None:
            return float(self._cum_inverse(v))
        if v >= self.total_area:
            return 0.0
        lo = self.support_bound if self.bounded else -1.0
        while self.cumulative(lo) > v:
            lo *= 2.0
        return float(optimize.brentq(lambda t: self.cumulative(t) - v, lo, 0.0, xtol=1e-12, rtol=1e-13))

    def horizon(self, rel: float = 1e-3) -> float:
        """Time T with G(T) <= rel * Leb(A); the support bound if bounded."""
        if self.bounded:
            return self.support_bound
        return self.cumulative_inverse(rel * self.total_area)


# ---------------------------------------------------------------------------
# named families


def exponential(lam: float, height: float | None = None) -> TrawlFunction:
    """phi(t) = h exp(lam t); h defaults to lam so that Leb(A) = 1."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    h = lam if height is None else float(height)
    return TrawlFunction(
        lambda t: h * np.exp(lam * t),
        cumulative=lambda t: h / lam * np.exp(lam * t),
        inverse=lambda x: np.log(x / h) / lam,
        cumulative_inverse=lambda v: np.log(v * lam / h) / lam,
        name=f"exponential({lam!r}, height={h!r})",
    )


def long_memory(c: float, H: float) -> TrawlFunction:
    """phi(t) = c (1 - t)^(-H), H > 1."""
    if c <= 0 or H <= 1:
        raise ValueError("long memory trawl needs c > 0 and H > 1")
    return TrawlFunction(
        lambda t: c * (1.0 - t) ** (-H),
        cumulative=lambda t: c * (1.0 - t) ** (1.0 - H) / (H - 1.0),
        inverse=lambda x: 1.0 - (x / c) ** (-1.0 / H),
        cumulative_inverse=lambda v: 1.0 - (v * (H - 1.0) / c) ** (1.0 / (1.0 - H)),
        name=f"long_memory({c!r}, {H!r})",
    )


def triangle(T: float, height: float = 1.0) -> TrawlFunction:
    """phi(t) = height (1 - t/T) on [T, 0]."""
    if T >= 0:
        raise ValueError("T must be negative")

    def G(t):
        t = np.maximum(t, T)
        return height * ((t - T) - (t * t - T * T) / (2 * T))

    def Ginv(v):
        # solve height * (-(t - T)^2 / (2T)) = v
        return T + np.sqrt(np.maximum(-2.0 * T * np.asarray(v) / height, 0.0))

    return TrawlFunction(
        lambda t: height * (1.0 - t / T),
        support_bound=T,
        cumulative=G,
        inverse=lambda x: T * (1.0 - x / height),
        cumulative_inverse=Ginv,
        name=f"triangle({T!r}, height={height!r})",
    )


def rectangle(T: float, height: float = 1.0) -> TrawlFunction:
    """phi = height on [T, 0]."""
    if T >= 0:
        raise ValueError("T must be negative")
    return TrawlFunction(
        lambda t: np.full(np.shape(t), float(height)),
        support_bound=T,
        cumulative=lambda t: height * (np.maximum(t, T) - T),
        inverse=lambda x: T,
        cumulative_inverse=lambda v: T + v / height,
        name=f"rectangle({T!r}, height={height!r})",
    )


def tabulated(times, heights, name: str = "tabulated") -> TrawlFunction:
    """Piecewise-linear phi through (time, height) knots ending at t = 0.

    phi is 0 before the first knot, which becomes the support bound.
    """
    t = np.asarray(times, dtype=float)
    h = np.asarray(heights, dtype=float)
    order = np.argsort(t)
    t, h = t[order], h[order]
    if t[-1] != 0.0 or t[0] >= 0:
        raise ValueError("tabulated trawl must span [T, 0] with T < 0")
    if np.any(np.diff(h) < 0) or np.any(h < 0):
        raise ValueError("tabulated heights must be nonnegative and nondecreasing in time")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (h[1:] + h[:-1]) * np.diff(t))])

    def G(x):
        if x <= t[0]:
            return 0.0
        j = min(int(np.searchsorted(t, x, side="right")) - 1, len(t) - 2)
        dx = x - t[j]
        slope = (h[j + 1] - h[j]) / (t[j + 1] - t[j])
        return float(cum[j] + h[j] * dx + 0.5 * slope * dx * dx)

    return TrawlFunction(lambda s: np.interp(s, t, h), support_bound=float(t[0]), cumulative=G, name=name)


def read_tabulated(path: str) -> TrawlFunction:
    times, heights = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                a, b = float(row[0]), float(row[1])
            except ValueError:
                continue  # header line
            times.append(a)
            heights.append(b)
    return tabulated(times, heights, name=f"tabulated({path!r})")


# ---------------------------------------------------------------------------
# operations


def total_area(trawl: TrawlFunction) -> float:
    return trawl.total_area


def autocorrelation(trawl: TrawlFunction, h: float) -> float:
    """rho(h) = Leb(A intersect A_h) / Leb(A)."""
    if h < 0:
        raise ValueError("lag must be nonnegative")
    if h == 0:
        return 1.0
    if trawl.bounded and h >= -trawl.support_bound:
        return 0.0
    return trawl.cumulative(-h) / trawl.total_area


def contains_point(trawl: TrawlFunction, t: float, point) -> bool:
    """True iff point (s, x) lies in the trawl set A_t."""
    s, x = point
    if s > t:
        return False
    return bool(0 < x < trawl(s - t))


@dataclass
class SlicePlan:
    """Slice areas consumed by the slice-partition simulators.

    Bounded mode: ``areas`` is I x 2; column 0 holds the first-band areas
    s_i1, column 1 the areas s_i2 shared by every later band.
    Unbounded mode: ``a`` holds a_1..a_k; row i of the staircase has
    k + 1 - i entries [a_i, a_i - a_{i+1}, ..., a_i - a_{i+1}, a_i].
    """

    mode: str
    tau: float
    k: int
    total_area: float
    I: int | None = None
    areas: np.ndarray | None = None
    a: np.ndarray | None = None
    n_trunc: int | None = None

    def row_areas(self, i: int) -> np.ndarray:
        """Areas of staircase row i (1-based), unbounded mode."""
        k, a = self.k, self.a
        m = k + 1 - i
        if m == 1:
            return np.array([a[i - 1]])
        row = np.full(m, a[i - 1] - a[i])
        row[0] = row[-1] = a[i - 1]
        return _guard(row, self.total_area)

    def staircase(self) -> np.ndarray:
        """Dense k x k staircase; row i holds k + 1 - i leading entries."""
        out = np.zeros((self.k, self.k))
        for i in range(1, self.k + 1):
            out[i - 1, : self.k + 1 - i] = self.row_areas(i)
        return out

    def rows(self) -> int:
        return self.k if self.n_trunc is None else self.n_trunc

    def dropped_per_trawl(self) -> np.ndarray:
        """Area left out of each trawl by dropping rows beyond n_trunc."""
        k = self.k
        if self.mode != "unbounded" or self.n_trunc is None or self.n_trunc >= k:
            return np.zeros(k)
        out = np.zeros(k)
        for i in range(self.n_trunc + 1, k + 1):
            row = self.row_areas(i)
            out += _row_to_trawls(row, i, k)
        return out


def _row_to_trawls(row, i, k):
    """Sum a staircase row into trawls: column c feeds trawls c..c+i-1."""
    cs = np.concatenate([[0.0], np.cumsum(np.concatenate([row, np.zeros(k - len(row))]))])
    l = np.arange(1, k + 1)
    return cs[l] - cs[np.maximum(l - i, 0)]


def _guard(areas, total):
    areas = np.asarray(areas, dtype=float)
    return np.where(areas < AREA_GUARD * total, 0.0, areas)


def slice_areas_bounded(trawl: TrawlFunction, tau: float, k: int) -> SlicePlan:
    if not trawl.bounded:
        raise ValueError("bounded slice plan needs a trawl with a support bound")
    if tau <= 0 or k < 1:
        raise ValueError("tau must be positive and k >= 1")
    I = max(1, math.ceil(-trawl.support_bound / tau - 1e-12))
    s1 = np.array([trawl.band(-i * tau, -(i - 1) * tau) for i in range(1, I + 1)])
    s2 = s1 - np.concatenate([s1[1:], [0.0]])
    total = trawl.total_area
    areas = _guard(np.column_stack([s1, s2]), total)
    # each later-band trawl holds i copies of row i
    got = float(np.dot(np.arange(1, I + 1), areas[:, 1])) if I > 1 else float(areas[0, 0])
    if abs(got - total) > 1e-9 * total + I * AREA_GUARD * total:
        raise ArithmeticError("slice areas do not reconstruct Leb(A)")
    return SlicePlan("bounded", tau, k, total, I=I, areas=areas)


def slice_areas_unbounded(trawl: TrawlFunction, tau: float, k: int, n_trunc: int | None = None) -> SlicePlan:
    if tau <= 0 or k < 1:
        raise ValueError("tau must be positive and k >= 1")
    if n_trunc is not None and not 1 <= n_trunc <= k:
        raise ValueError("n_trunc must lie in 1..k")
    total = trawl.total_area
    a = np.empty(k)
    for i in range(1, k):
        a[i - 1] = trawl.band(-i * tau, -(i - 1) * tau)
    a[k - 1] = trawl.cumulative(-(k - 1) * tau)
    return SlicePlan("unbounded", tau, k, total, a=a, n_trunc=n_trunc)


def default_truncation(trawl: TrawlFunction, tau: float, k: int, rel: float = 1e-6) -> int:
    """Smallest row cutoff n with dropped area at most rel * Leb(A)."""
    total = trawl.total_area
    for n in range(1, k + 1):
        if trawl.cumulative(-n * tau) <= rel * total:
            return n
    return k
