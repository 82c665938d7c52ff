"""Lévy seeds, their cumulants, set-law samplers and jump measures.

For a homogeneous Lévy basis the law of L(A) depends on A only through
Leb(A): its cumulant is Leb(A) times the cumulant of the seed L'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .inversion import EnvelopeSampler, LaplaceTransform, sample_by_inversion
from .rng import RngStream, as_stream


class Undefined:
    """Marker for a moment that does not exist (never NaN)."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False


UNDEFINED = Undefined()


def is_defined(value) -> bool:
    return value is not UNDEFINED


# ---------------------------------------------------------------------------
# Lévy measures


class LevyMeasure:
    """Base class. Subclasses describe l on R minus {0}."""

    finite: bool = True

    def mass_outside(self, eps: float) -> float:
        raise NotImplementedError

    def compensator_outside(self, eps: float) -> float:
        """Integral of y over eps < |y| <= 1."""
        raise NotImplementedError

    def second_inside(self, eps: float) -> float:
        """Integral of y^2 over |y| < eps."""
        raise NotImplementedError

    def big_jump_mean(self) -> float:
        """Integral of y over |y| > 1."""
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError

    def sample_outside(self, eps: float, n: int, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def cumulant(self, theta):
        """Integral of exp(i theta y) - 1 - i theta y 1{|y|<=1}."""
        raise NotImplementedError


@dataclass(frozen=True)
class FiniteMeasure(LevyMeasure):
    """Finite Lévy measure: total mass times a probability law of jumps.

    Build one with :meth:`point_masses` or :meth:`from_law`.
    """

    mass: float
    sampler: Callable[[int, np.random.Generator], np.ndarray]
    cf: Callable[[np.ndarray], np.ndarray]
    # tail probability P(|Y| > eps) and partial moments of the jump law
    tail_prob: Callable[[float], float]
    partial_mean: Callable[[float, float], float]  # E[Y; a < |Y| <= b]
    partial_second: Callable[[float, float], float]  # E[Y^2; a <= |Y| < b]
    compensator: float = field(init=False)

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError("finite measure needs 0 < mass < inf")
        object.__setattr__(self, "compensator", self.mass * self.partial_mean(-1.0, 1.0))

    @classmethod
    def point_masses(cls, values: Sequence[float], weights: Sequence[float]) -> "FiniteMeasure":
        v = np.asarray(values, dtype=float)
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0) or np.any(v == 0):
            raise ValueError("point masses need positive weights at nonzero values")
        total = float(w.sum())
        p = w / total

        def sampler(n, gen):
            if len(v) == 1:
                return np.full(n, v[0])
            return v[gen.choice(len(v), size=n, p=p)]

        def cf(theta):
            theta = np.asarray(theta, dtype=float)
            return np.sum(p * np.exp(1j * np.multiply.outer(theta, v)), axis=-1)

        absv = np.abs(v)
        return cls(
            mass=total,
            sampler=sampler,
            cf=cf,
            tail_prob=lambda eps: float(p[absv > eps].sum()),
            partial_mean=lambda a, b: float((p * v)[(absv > a) & (absv <= b)].sum()),
            partial_second=lambda a, b: float((p * v * v)[(absv >= a) & (absv < b)].sum()),
        )

    @classmethod
    def from_law(cls, mass: float, law) -> "FiniteMeasure":
        """Jumps from a frozen scipy.stats continuous law."""

        def expect(g, lo, hi):
            lo_, hi_ = max(lo, law.support()[0]), min(hi, law.support()[1])
            if lo_ >= hi_:
                return 0.0
            return float(integrate.quad(lambda y: g(y) * law.pdf(y), lo_, hi_, limit=200, epsabs=1e-12)[0])

        def pm(a, b):
            return expect(lambda y: y, -b, -a) + expect(lambda y: y, a, b)

        def ps(a, b):
            return expect(lambda y: y * y, -b, -a) + expect(lambda y: y * y, a, b)

        def cf(theta):
            theta = np.atleast_1d(np.asarray(theta, dtype=float))
            out = [
                complex(law.expect(lambda y: math.cos(t * y)), law.expect(lambda y: math.sin(t * y)))
                for t in theta
            ]
            return np.array(out)

        return cls(
            mass=float(mass),
            sampler=lambda n, gen: law.rvs(size=n, random_state=gen),
            cf=cf,
            tail_prob=lambda eps: float(law.sf(eps) + law.cdf(-eps)),
            partial_mean=pm,
            partial_second=ps,
        )

    def mass_outside(self, eps: float) -> float:
        return self.mass * self.tail_prob(eps)

    def compensator_outside(self, eps: float) -> float:
        return self.mass * self.partial_mean(eps, 1.0)

    def second_inside(self, eps: float) -> float:
        return self.mass * self.partial_second(0.0, eps)

    def big_jump_mean(self) -> float:
        return self.mass * self.partial_mean(1.0, math.inf)

    def second_moment(self) -> float:
        return self.mass * self.partial_second(0.0, math.inf)

    def sample_outside(self, eps, n, gen):
        if eps <= 0:
            return np.asarray(self.sampler(n, gen), dtype=float)
        out = np.empty(n)
        filled = 0
        while filled < n:
            y = np.asarray(self.sampler(max(16, 2 * (n - filled)), gen), dtype=float)
            y = y[np.abs(y) > eps][: n - filled]
            out[filled : filled + len(y)] = y
            filled += len(y)
        return out

    def cumulant(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.mass * (self.cf(theta) - 1.0) - 1j * theta * self.compensator


@dataclass(frozen=True, eq=False)
class InfiniteDensity(LevyMeasure):
    """Infinite-activity Lévy measure given by a density on each side of 0.

    ``density`` must be vectorised and nonincreasing in |y| on each side.
    ``tail_slopes`` gives the limiting derivative of log-density as |y|
    grows on the (negative, positive) side, needed for the rejection hull.
    ``pareto_tail`` marks a density proportional to |y|^(-1-p) on a side,
    which is then sampled exactly by inversion.
    """

    density: Callable[[np.ndarray], np.ndarray]
    positive: bool = True
    negative: bool = False
    tail_slopes: tuple[float | None, float | None] = (None, None)
    pareto_index: float | None = None
    finite = False

    def _sides(self):
        if self.positive:
            yield 1.0
        if self.negative:
            yield -1.0

    def _side_integral(self, g, sign, lo, hi):
        f = lambda u: g(sign * u) * float(self.density(np.asarray(sign * u)))
        if hi <= lo:
            return 0.0
        if math.isinf(hi) and lo < 1.0:
            return self._side_integral(g, sign, lo, 1.0) + self._side_integral(g, sign, 1.0, hi)
        pts = None
        if lo > 0 and math.isfinite(hi) and hi / lo > 50:
            pts = list(np.geomspace(lo, hi, 8)[1:-1])
        return float(integrate.quad(f, lo, hi, points=pts, limit=400, epsabs=1e-13, epsrel=1e-11)[0])

    def mass_outside(self, eps):
        if eps <= 0:
            return math.inf
        return self._mass_outside_cached(float(eps))

    @lru_cache(maxsize=64)
    def _mass_outside_cached(self, eps):
        return sum(self._side_integral(lambda y: 1.0, s, eps, math.inf) for s in self._sides())

    def compensator_outside(self, eps):
        return sum(self._side_integral(lambda y: y, s, max(eps, 0.0), 1.0) for s in self._sides())

    def second_inside(self, eps):
        return sum(self._side_integral(lambda y: y * y, s, 0.0, eps) for s in self._sides())

    def big_jump_mean(self):
        return sum(self._side_integral(lambda y: y, s, 1.0, math.inf) for s in self._sides())

    def second_moment(self):
        return sum(self._side_integral(lambda y: y * y, s, 0.0, math.inf) for s in self._sides())

    @lru_cache(maxsize=64)
    def _envelope(self, eps, sign):
        slope = self.tail_slopes[1] if sign > 0 else self.tail_slopes[0]
        logpdf = lambda u: np.log(np.asarray(self.density(sign * np.asarray(u)), dtype=float))
        return EnvelopeSampler(logpdf, (eps, math.inf), tail_slopes=(None, slope))

    def sample_outside(self, eps, n, gen):
        if eps <= 0:
            raise ValueError("an infinite Lévy measure needs eps > 0")
        sides = list(self._sides())
        masses = np.array([self._side_integral(lambda y: 1.0, s, eps, math.inf) for s in sides])
        counts = gen.multinomial(n, masses / masses.sum()) if len(sides) > 1 else [n]
        parts = []
        for s, m in zip(sides, counts):
            if m == 0:
                continue
            if self.pareto_index is not None:
                # P(|Y| > y) = (eps / y)^p on this side
                u = gen.uniform(size=m)
                parts.append(s * eps * u ** (-1.0 / self.pareto_index))
            else:
                parts.append(s * self._envelope(float(eps), s).sample(int(m), RngStream_from(gen)))
        out = np.concatenate(parts) if parts else np.empty(0)
        # keep the side order random, not grouped
        return out[gen.permutation(len(out))] if len(sides) > 1 else out

    def cumulant(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        out = []
        for t in theta:
            re = sum(self._side_integral(lambda y: math.cos(t * y) - 1.0, s, 0.0, math.inf) for s in self._sides())
            im = sum(
                self._side_integral(lambda y: math.sin(t * y) - (t * y if abs(y) <= 1 else 0.0), s, 0.0, math.inf)
                for s in self._sides()
            )
            out.append(complex(re, im))
        return np.array(out)


class _GenStream(RngStream):
    """Adapter letting a bare Generator act where a stream is expected."""

    def __init__(self, gen):
        super().__init__(0)
        self._gen = gen


def RngStream_from(gen: np.random.Generator) -> RngStream:
    return _GenStream(gen)


# one instance per parameter set, so the per-measure envelope cache is shared
@lru_cache(maxsize=32)
def gamma_measure(shape: float, scale: float) -> InfiniteDensity:
    return InfiniteDensity(lambda y: shape * np.exp(-y / scale) / y, tail_slopes=(None, -1.0 / scale))


@lru_cache(maxsize=32)
def inverse_gaussian_measure(delta: float, gamma: float) -> InfiniteDensity:
    c = delta / math.sqrt(2 * math.pi)
    return InfiniteDensity(
        lambda y: c * y**-1.5 * np.exp(-0.5 * gamma**2 * y), tail_slopes=(None, -0.5 * gamma**2)
    )


@lru_cache(maxsize=32)
def cauchy_measure(gamma: float) -> InfiniteDensity:
    return InfiniteDensity(lambda y: gamma / (math.pi * y * y), positive=True, negative=True, pareto_index=1.0)


# ---------------------------------------------------------------------------
# seeds


class LevySeed:
    """Base class for the law of L'."""

    def cumulant(self, theta):
        raise NotImplementedError

    def mean(self):
        raise NotImplementedError

    def variance(self):
        raise NotImplementedError

    def _draw(self, areas: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


def _pos(x, name):
    if not (x > 0 and math.isfinite(x)):
        raise ValueError(f"{name} must be positive and finite")


@dataclass(frozen=True)
class Poisson(LevySeed):
    nu: float

    def __post_init__(self):
        _pos(self.nu, "nu")

    def cumulant(self, theta):
        return self.nu * (np.exp(1j * np.asarray(theta, dtype=float)) - 1.0)

    def mean(self):
        return self.nu

    def variance(self):
        return self.nu

    def _draw(self, areas, gen):
        return gen.poisson(self.nu * areas).astype(float)


@dataclass(frozen=True)
class Skellam(LevySeed):
    mu1: float
    mu2: float

    def __post_init__(self):
        _pos(self.mu1, "mu1")
        _pos(self.mu2, "mu2")

    def cumulant(self, theta):
        t = np.asarray(theta, dtype=float)
        return self.mu1 * (np.exp(1j * t) - 1.0) + self.mu2 * (np.exp(-1j * t) - 1.0)

    def mean(self):
        return self.mu1 - self.mu2

    def variance(self):
        return self.mu1 + self.mu2

    def _draw(self, areas, gen):
        return (gen.poisson(self.mu1 * areas) - gen.poisson(self.mu2 * areas)).astype(float)


@dataclass(frozen=True)
class Gaussian(LevySeed):
    mu: float
    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 >= 0 and math.isfinite(self.sigma2) and math.isfinite(self.mu)):
            raise ValueError("Gaussian needs finite mu and sigma2 >= 0")

    def cumulant(self, theta):
        t = np.asarray(theta, dtype=float)
        return 1j * t * self.mu - 0.5 * self.sigma2 * t * t

    def mean(self):
        return self.mu

    def variance(self):
        return self.sigma2

    def _draw(self, areas, gen):
        z = gen.standard_normal(np.shape(areas))
        return self.mu * areas + np.sqrt(self.sigma2 * areas) * z


@dataclass(frozen=True)
class Cauchy(LevySeed):
    gamma: float

    def __post_init__(self):
        _pos(self.gamma, "gamma")

    def cumulant(self, theta):
        return -self.gamma * np.abs(np.asarray(theta, dtype=float)) + 0j

    def mean(self):
        return UNDEFINED

    def variance(self):
        return UNDEFINED

    def _draw(self, areas, gen):
        return self.gamma * areas * gen.standard_cauchy(np.shape(areas))


@dataclass(frozen=True)
class Gamma(LevySeed):
    """Gamma law with shape ``shape`` and scale ``scale``."""

    shape: float
    scale: float

    def __post_init__(self):
        _pos(self.shape, "shape")
        _pos(self.scale, "scale")

    def cumulant(self, theta):
        t = np.asarray(theta, dtype=float)
        return -self.shape * np.log(1.0 - 1j * t * self.scale)

    def mean(self):
        return self.shape * self.scale

    def variance(self):
        return self.shape * self.scale**2

    def _draw(self, areas, gen):
        return gen.gamma(self.shape * areas, self.scale)

    def laplace(self, area: float) -> LaplaceTransform:
        k = self.shape * area
        return LaplaceTransform(lambda s: (1.0 + self.scale * s) ** (-k), mean=k * self.scale)


@dataclass(frozen=True)
class InverseGaussian(LevySeed):
    """Density delta/sqrt(2 pi x^3) exp(delta gamma - (delta^2/x + gamma^2 x)/2)."""

    delta: float
    gamma: float

    def __post_init__(self):
        _pos(self.delta, "delta")
        _pos(self.gamma, "gamma")

    def cumulant(self, theta):
        t = np.asarray(theta, dtype=float)
        return self.delta * (self.gamma - np.sqrt(self.gamma**2 - 2j * t))

    def mean(self):
        return self.delta / self.gamma

    def variance(self):
        return self.delta / self.gamma**3

    def _draw(self, areas, gen):
        d = self.delta * areas
        return gen.wald(d / self.gamma, d * d)

    def laplace(self, area: float) -> LaplaceTransform:
        d = self.delta * area
        return LaplaceTransform(lambda s: np.exp(d * (self.gamma - np.sqrt(self.gamma**2 + 2 * s))), mean=d / self.gamma)


@dataclass(frozen=True)
class Stable(LevySeed):
    """Stable law with cumulant i theta mu - |c theta|^alpha (1 - i beta sign(theta) Phi)."""

    alpha: float
    beta: float
    c: float
    mu: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if not -1 <= self.beta <= 1:
            raise ValueError("beta must lie in [-1, 1]")
        _pos(self.c, "c")

    def cumulant(self, theta):
        t = np.asarray(theta, dtype=float)
        a = self.alpha
        if a == 1.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                phi = np.where(t == 0, 0.0, -(2.0 / math.pi) * np.log(np.abs(t)))
        else:
            phi = math.tan(math.pi * a / 2.0)
        return 1j * t * self.mu - np.abs(self.c * t) ** a * (1.0 - 1j * self.beta * np.sign(t) * phi)

    def mean(self):
        return self.mu if self.alpha > 1 else UNDEFINED

    def variance(self):
        return 2.0 * self.c**2 if self.alpha == 2 else UNDEFINED

    def scaled(self, area: float) -> "Stable":
        return Stable(self.alpha, self.beta, self.c * area ** (1.0 / self.alpha), self.mu * area)

    def _draw(self, areas, gen):
        shape = np.shape(areas)
        c = self.c * np.asarray(areas) ** (1.0 / self.alpha)
        return c * chambers_mallows_stuck(self.alpha, self.beta, shape, gen) + self.mu * areas + self._shift(c)

    def _shift(self, c):
        if self.alpha == 1.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(c > 0, (2.0 / math.pi) * self.beta * c * np.log(np.where(c > 0, c, 1.0)), 0.0)
        return 0.0


def chambers_mallows_stuck(alpha: float, beta: float, size, gen: np.random.Generator) -> np.ndarray:
    """Standard stable draws (c=1, mu=0) in the parametrisation of :class:`Stable`."""
    v = gen.uniform(-math.pi / 2, math.pi / 2, size)
    w = gen.standard_exponential(size)
    if alpha == 1.0:
        h = math.pi / 2 + beta * v
        return (2.0 / math.pi) * (h * np.tan(v) - beta * np.log((math.pi / 2) * w * np.cos(v) / h))
    t = beta * math.tan(math.pi * alpha / 2)
    b = np.arctan(t) / alpha
    s = (1.0 + t * t) ** (1.0 / (2 * alpha))
    return (
        s
        * np.sin(alpha * (v + b))
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - alpha * (v + b)) / w) ** ((1.0 - alpha) / alpha)
    )


@dataclass(frozen=True)
class CustomTriplet(LevySeed):
    """Seed given by its triplet (xi, a, l) with truncation on [-1, 1]."""

    xi: float = 0.0
    a: float = 0.0
    measure: LevyMeasure | None = None

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("Gaussian variance a must be nonnegative")

    def cumulant(self, theta):
        t = np.asarray(theta, dtype=float)
        out = 1j * t * self.xi - 0.5 * self.a * t * t
        if self.measure is not None:
            out = out + self.measure.cumulant(t)
        return out

    def mean(self):
        return self.xi + (self.measure.big_jump_mean() if self.measure is not None else 0.0)

    def variance(self):
        return self.a + (self.measure.second_moment() if self.measure is not None else 0.0)

    def _draw(self, areas, gen):
        areas = np.asarray(areas, dtype=float)
        out = self.xi * areas + np.sqrt(self.a * areas) * gen.standard_normal(areas.shape)
        m = self.measure
        if m is None:
            return out
        if not m.finite:
            raise NotImplementedError(
                "exact set-law draws for an infinite Lévy measure are not available; "
                "split the seed and use the compound Poisson simulator with eps > 0"
            )
        counts = gen.poisson(m.mass * areas)
        jumps = m.sample_outside(0.0, int(counts.sum()), gen)
        owner = np.repeat(np.arange(areas.size), counts.ravel())
        sums = np.bincount(owner, weights=jumps, minlength=areas.size).reshape(areas.shape)
        return out + sums - m.compensator * areas


# ---------------------------------------------------------------------------
# operations


def _check_area(area):
    if not (area > 0 and math.isfinite(area)):
        raise ValueError("area must be positive and finite")


def seed_cumulant(seed: LevySeed, theta):
    """Cumulant C(theta, L') of the seed."""
    t = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("theta must be finite")
    out = np.asarray(seed.cumulant(t), dtype=complex)
    return complex(out) if out.ndim == 0 else out


def set_law_cumulant(seed: LevySeed, area: float, theta):
    """Cumulant of L(A) with Leb(A) = area."""
    _check_area(area)
    return area * seed_cumulant(seed, theta)


def sample_areas(seed: LevySeed, areas, rng: RngStream | np.random.Generator | int | None) -> np.ndarray:
    """One independent draw of L(S) per entry of ``areas``; zero areas give 0."""
    gen = rng if isinstance(rng, np.random.Generator) else as_stream(rng).generator
    areas = np.asarray(areas, dtype=float)
    if np.any(areas < 0):
        raise ValueError("areas must be nonnegative")
    out = np.zeros(areas.shape)
    live = areas > 0
    if np.all(live):
        return np.asarray(seed._draw(areas, gen), dtype=float)
    if np.any(live):
        out[live] = seed._draw(areas[live], gen)
    return out


def sample_set_law(
    seed: LevySeed, area: float, n: int, rng: RngStream | np.random.Generator | int | None, method: str = "direct"
) -> np.ndarray:
    """``n`` iid draws of L(A) with Leb(A) = area.

    ``method="inversion"`` samples Gamma and inverse Gaussian seeds through
    numerical Laplace inversion instead of the library samplers.
    """
    _check_area(area)
    if n == 0:
        return np.empty(0)
    if method == "inversion":
        if not hasattr(seed, "laplace"):
            raise ValueError(f"no Laplace transform for {type(seed).__name__}")
        stream = rng if isinstance(rng, RngStream) else RngStream_from(rng) if isinstance(rng, np.random.Generator) else as_stream(rng)
        return sample_by_inversion(seed.laplace(area), n, stream)
    return sample_areas(seed, np.full(n, float(area)), rng)


def set_mean_var(seed: LevySeed, area: float):
    """Mean and variance of L(A); missing moments come back as UNDEFINED."""
    _check_area(area)
    m, v = seed.mean(), seed.variance()
    return (area * m if is_defined(m) else UNDEFINED, area * v if is_defined(v) else UNDEFINED)


def levy_ito_split(seed: LevySeed) -> tuple[LevySeed, LevySeed]:
    """Split a seed into independent Gaussian (xi, a, 0) and jump (0, 0, l) parts."""
    zero = CustomTriplet(0.0, 0.0, None)
    if isinstance(seed, Gaussian):
        return seed, zero
    if isinstance(seed, Poisson):
        return Gaussian(seed.nu, 0.0), CustomTriplet(0.0, 0.0, FiniteMeasure.point_masses([1.0], [seed.nu]))
    if isinstance(seed, Skellam):
        m = FiniteMeasure.point_masses([1.0, -1.0], [seed.mu1, seed.mu2])
        return Gaussian(seed.mu1 - seed.mu2, 0.0), CustomTriplet(0.0, 0.0, m)
    if isinstance(seed, Gamma):
        xi = seed.shape * seed.scale * (1.0 - math.exp(-1.0 / seed.scale))
        return Gaussian(xi, 0.0), CustomTriplet(0.0, 0.0, gamma_measure(seed.shape, seed.scale))
    if isinstance(seed, InverseGaussian):
        xi = seed.delta / seed.gamma * math.erf(seed.gamma / math.sqrt(2.0))
        return Gaussian(xi, 0.0), CustomTriplet(0.0, 0.0, inverse_gaussian_measure(seed.delta, seed.gamma))
    if isinstance(seed, Cauchy):
        return Gaussian(0.0, 0.0), CustomTriplet(0.0, 0.0, cauchy_measure(seed.gamma))
    if isinstance(seed, CustomTriplet):
        return Gaussian(seed.xi, seed.a), CustomTriplet(0.0, 0.0, seed.measure)
    raise NotImplementedError(f"Lévy-Itô split is not implemented for {type(seed).__name__}")


def sample_levy_measure(measure: LevyMeasure, eps: float, n: int, rng) -> np.ndarray:
    """``n`` iid jumps from l restricted to |y| > eps, normalised."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0 and not measure.finite:
        raise ValueError("eps = 0 with an infinite Lévy measure")
    gen = rng if isinstance(rng, np.random.Generator) else as_stream(rng).generator
    if n == 0:
        return np.empty(0)
    return measure.sample_outside(eps, n, gen)
