"""Sampling laws known only through a transform.

CDF and density values come from Bromwich inversion of a Laplace transform
(trapezium rule with Euler summation) or from the Gil-Pelaez integral of a
characteristic function. Quantiles are found by safeguarded Newton steps.
The module also has a rejection sampler with a piecewise-linear upper hull of
a log-density, used for normalised Lévy measures.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.special import comb

from .rng import RngStream, as_stream


class InversionError(RuntimeError):
    """Raised when a transform inversion or a quantile search fails."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual {residual:.3g})")
        self.residual = residual


# ---------------------------------------------------------------------------
# transform specifications


@dataclass(frozen=True)
class LaplaceTransform:
    """Law on a half-line given by s -> E[exp(-s X)].

    With ``side="negative"`` the transform is that of ``-X``.
    """

    transform: Callable[[np.ndarray], np.ndarray]
    mean: float | None = None
    side: str = "positive"

    def __post_init__(self):
        if self.side not in ("positive", "negative"):
            raise ValueError("side must be 'positive' or 'negative'")


@dataclass(frozen=True)
class CharacteristicFunction:
    """Law on the real line given by theta -> E[exp(i theta X)]."""

    cf: Callable[[np.ndarray], np.ndarray]
    mean: float | None = None


TransformSpec = LaplaceTransform | CharacteristicFunction


# ---------------------------------------------------------------------------
# Bromwich inversion

_EULER_A = 25.0
_EULER_N = 25
_EULER_M = 11


def bromwich_euler(
    transform: Callable[[np.ndarray], np.ndarray],
    t: float,
    n: int = _EULER_N,
    m: int = _EULER_M,
    a: float = _EULER_A,
) -> tuple[float, float]:
    """Invert a Laplace transform at ``t > 0``.

    Returns the value and an error estimate (change in the Euler average when
    one more partial sum is used).
    """
    if t <= 0:
        raise ValueError("Bromwich inversion needs t > 0")
    kk = np.arange(n + m + 2)
    s = (a + 2j * math.pi * kk) / (2.0 * t)
    vals = np.real(np.asarray(transform(s), dtype=complex))
    terms = vals * np.where(kk % 2 == 0, 1.0, -1.0)
    terms[0] *= 0.5
    partial = np.cumsum(terms)
    weights = comb(m, np.arange(m + 1)) / 2.0**m
    scale = math.exp(a / 2.0) / t
    est = scale * float(np.dot(weights, partial[n : n + m + 1]))
    nxt = scale * float(np.dot(weights, partial[n + 1 : n + m + 2]))
    return est, abs(nxt - est)


def _laplace_cdf_pdf(spec: LaplaceTransform, y: float) -> tuple[float, float, float]:
    # y is on the positive side
    if y <= 0:
        return 0.0, 0.0, 0.0
    lt = spec.transform
    cdf, e1 = bromwich_euler(lambda s: lt(s) / s, y)
    pdf, e2 = bromwich_euler(lt, y)
    return cdf, pdf, max(e1, e2)


def _cf_cutoff(cf, tol=1e-14) -> float:
    theta = 1.0
    while abs(cf(np.array([theta]))[0]) > tol:
        theta *= 2.0
        if theta > 1e7:
            raise InversionError("characteristic function does not decay", abs(cf(np.array([theta]))[0]))
    return theta


def _gil_pelaez(spec: CharacteristicFunction, x: float) -> tuple[float, float, float]:
    cf = spec.cf
    top = _cf_cutoff(cf)

    def im_part(theta):
        if theta == 0.0:
            # limit of Im(e^{-i theta x} cf(theta)) / theta as theta -> 0
            h = 1e-8
            return float(np.imag(np.exp(-1j * h * x) * cf(np.array([h]))[0])) / h
        return float(np.imag(np.exp(-1j * theta * x) * cf(np.array([theta]))[0])) / theta

    def re_part(theta):
        return float(np.real(np.exp(-1j * theta * x) * cf(np.array([theta]))[0]))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        i1, e1 = integrate.quad(im_part, 0.0, top, limit=2000, epsabs=1e-11, epsrel=1e-10)
        i2, e2 = integrate.quad(re_part, 0.0, top, limit=2000, epsabs=1e-11, epsrel=1e-10)
    if e1 + e2 > 1e-6:
        raise InversionError("Fourier inversion did not reach tolerance", (e1 + e2) / math.pi)
    return 0.5 - i1 / math.pi, i2 / math.pi, (e1 + e2) / math.pi


def eval_cdf_pdf(spec: TransformSpec, x: float, with_error: bool = False):
    """Evaluate the CDF and density of ``spec`` at ``x``.

    Returns ``(F, f)``, or ``(F, f, err)`` when ``with_error`` is set.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    if isinstance(spec, LaplaceTransform):
        if spec.side == "positive":
            F, f, err = _laplace_cdf_pdf(spec, x)
        else:
            G, g, err = _laplace_cdf_pdf(spec, -x)
            F, f = 1.0 - G, g
            if x >= 0:
                F, f = 1.0, 0.0
    elif isinstance(spec, CharacteristicFunction):
        F, f, err = _gil_pelaez(spec, x)
    else:
        raise TypeError(f"unsupported transform spec {type(spec).__name__}")
    if not (math.isfinite(F) and math.isfinite(f)):
        raise InversionError("transform inversion did not converge", err)
    return (F, f, err) if with_error else (F, f)


# ---------------------------------------------------------------------------
# quantile inversion


def _initial_bracket(spec: TransformSpec, u: float) -> tuple[float, float, float]:
    cdf = lambda z: eval_cdf_pdf(spec, z)[0]
    if isinstance(spec, LaplaceTransform):
        start = spec.mean if spec.mean else 1.0
        start = abs(start)
        if spec.side == "positive":
            lo, hi = 0.0, start
            while cdf(hi) < u:
                lo, hi = hi, hi * 2.0
                if hi > 1e12:
                    raise InversionError("no upper bracket", u)
            return lo, hi, spec.mean if spec.mean is not None else 0.5 * (lo + hi)
        lo, hi = -start, 0.0
        while cdf(lo) > u:
            lo, hi = lo * 2.0, lo
            if lo < -1e12:
                raise InversionError("no lower bracket", u)
        return lo, hi, spec.mean if spec.mean is not None else 0.5 * (lo + hi)
    # real line: walk a 17-point geometric grid outward from the centre
    grid = np.concatenate([-np.geomspace(1e4, 1e-2, 8), [0.0], np.geomspace(1e-2, 1e4, 8)])
    centre = spec.mean if spec.mean is not None else 0.0
    pts = centre + grid
    i = 8
    if cdf(pts[i]) < u:
        while cdf(pts[i]) < u:
            i += 1
            if i == len(pts):
                raise InversionError("quantile above scanned range", u)
        lo, hi = pts[i - 1], pts[i]
    else:
        while cdf(pts[i]) >= u:
            i -= 1
            if i < 0:
                raise InversionError("quantile below scanned range", u)
        lo, hi = pts[i], pts[i + 1]
    x0 = spec.mean if (spec.mean is not None and lo < spec.mean < hi) else 0.5 * (lo + hi)
    return lo, hi, x0


def inverse_cdf_sample(spec: TransformSpec, u: float, tol: float = 1e-9, maxiter: int = 200) -> float:
    """Return x with |F(x) - u| <= tol by Newton steps with bisection fallback."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    lo, hi, x = _initial_bracket(spec, u)
    resid = float("inf")
    for _ in range(maxiter):
        F, f = eval_cdf_pdf(spec, x)
        resid = F - u
        if abs(resid) <= tol:
            return x
        if resid < 0:
            lo = x
        else:
            hi = x
        step_ok = f >= 1e-12
        if step_ok:
            nx = x - resid / f
            step_ok = lo < nx < hi
        x = nx if step_ok else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, abs(x)):
            # bracket collapsed, F is flat at machine precision here
            return x
    raise InversionError("Newton/bisection iteration cap reached", abs(resid))


def sample_by_inversion(spec: TransformSpec, n: int, rng: RngStream | int | None = None) -> np.ndarray:
    gen = as_stream(rng).generator
    u = gen.uniform(size=n)
    return np.array([inverse_cdf_sample(spec, float(v)) for v in u])


def mixed_sample(
    spec: TransformSpec | None,
    atoms: dict[float, float] | Sequence[tuple[float, float]],
    n: int,
    rng: RngStream | int | None = None,
) -> np.ndarray:
    """Sample a law with atoms and an absolutely continuous remainder.

    ``atoms`` maps value to mass; the continuous part carries the remaining
    weight ``1 - sum(masses)`` and is sampled by inversion of ``spec``.
    """
    items = list(atoms.items()) if isinstance(atoms, dict) else list(atoms)
    values = np.array([v for v, _ in items], dtype=float)
    masses = np.array([p for _, p in items], dtype=float)
    if np.any(masses < 0):
        raise ValueError("atom masses must be nonnegative")
    total = float(masses.sum())
    if total > 1.0 + 1e-12:
        raise ValueError("atom masses sum above one")
    rest = max(0.0, 1.0 - total)
    if rest > 1e-15 and spec is None:
        raise ValueError("continuous weight is positive but no transform was given")
    gen = as_stream(rng).generator
    pick = gen.uniform(size=n)
    inner = gen.uniform(size=n)
    edges = np.cumsum(masses)
    comp = np.searchsorted(edges, pick, side="right")
    out = np.empty(n)
    for j in range(n):
        c = comp[j]
        if c < len(values):
            out[j] = values[c]
        else:
            out[j] = inverse_cdf_sample(spec, float(min(max(inner[j], 1e-300), 1 - 1e-16)))
    return out


# ---------------------------------------------------------------------------
# rejection from a piecewise-linear hull of a log-density


def _num_deriv(h, y: float, lo: float, hi: float) -> float:
    e = 1e-4 * max(abs(y), 1e-3)
    # keep the stencil inside the domain near a finite end
    room = [v for v in (y - lo, hi - y) if v > 0]
    if room:
        e = min(e, 0.25 * min(room))
    if y - 2 * e > lo and y + 2 * e < hi:
        return float((-h(y + 2 * e) + 8 * h(y + e) - 8 * h(y - e) + h(y - 2 * e)) / (12 * e))
    if y - 2 * e <= lo:
        return float((-3 * h(y) + 4 * h(y + e) - h(y + 2 * e)) / (2 * e))
    return float((3 * h(y) - 4 * h(y - e) + h(y - 2 * e)) / (2 * e))


def _second_diff(h, y: float) -> float:
    e = 1e-3 * max(abs(y), 1e-3)
    return float(h(y + e) - 2 * h(y) + h(y - e)) / e**2


class RejectionResult(NamedTuple):
    samples: np.ndarray
    acceptance: float


@dataclass
class EnvelopeSampler:
    """Exact rejection sampler for a density known up to a constant.

    The log-density is bounded above by tangents on concave pieces and by
    chords on convex pieces. Unbounded convex tails need ``tail_slopes``, the
    limiting derivative of the log-density at that end.
    """

    logpdf: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float]
    knots: Sequence[float] | None = None
    inflections: Sequence[float] | None = None
    tail_slopes: tuple[float | None, float | None] = (None, None)
    n_knots: int = 32
    # segments: start, direction, length, log-value at start, slope along direction
    seg: np.ndarray = field(init=False, repr=False)
    prob: np.ndarray = field(init=False, repr=False)
    log_mass: float = field(init=False)
    last_acceptance: float = field(init=False, default=float("nan"))

    def __post_init__(self):
        a, b = map(float, self.domain)
        if not a < b:
            raise ValueError("empty domain")
        h = lambda y: float(np.asarray(self.logpdf(np.asarray(y, dtype=float))))
        knots = self._default_knots(a, b) if self.knots is None else np.asarray(sorted(self.knots), float)
        knots = knots[(knots >= a) & (knots <= b)]
        if math.isfinite(a) and (len(knots) == 0 or knots[0] > a):
            knots = np.concatenate([[a], knots])
        if math.isfinite(b) and knots[-1] < b:
            knots = np.concatenate([knots, [b]])
        infl = self._find_inflections(h, knots) if self.inflections is None else list(self.inflections)
        knots = np.unique(np.concatenate([knots, [p for p in infl if a < p < b]]))
        self._build(h, knots, a, b)

    def _default_knots(self, a, b):
        n = self.n_knots
        if math.isfinite(a) and math.isfinite(b):
            if a > 0 and b / a > 100:
                # dense near a without starving the far end
                return np.union1d(np.geomspace(a, b, n // 2 + 1), np.linspace(a, b, n // 2 + 1))
            return np.linspace(a, b, n)
        if math.isfinite(a):
            s = self.tail_slopes[1]
            span = 30.0 / abs(s) if s else 50.0 * (1 + abs(a))
            return np.geomspace(a, a + span, n) if a > 0 else a + np.linspace(0, span, n)
        if math.isfinite(b):
            s = self.tail_slopes[0]
            span = 30.0 / abs(s) if s else 50.0 * (1 + abs(b))
            return b - np.linspace(span, 0, n)
        raise ValueError("knots are required on the whole real line")

    @staticmethod
    def _find_inflections(h, knots):
        lo, hi = knots[0], knots[-1]
        if lo > 0 and hi / lo > 100:
            probe = np.geomspace(lo, hi, 2049)
        else:
            probe = np.linspace(lo, hi, 2049)
        probe = probe[1:-1]
        d2 = np.array([_second_diff(h, y) for y in probe])
        sgn = np.sign(d2)
        found = []
        for i in np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]:
            l, r = probe[i], probe[i + 1]
            sl = sgn[i]
            for _ in range(60):
                mid = 0.5 * (l + r)
                if np.sign(_second_diff(h, mid)) == sl:
                    l = mid
                else:
                    r = mid
            found.append(0.5 * (l + r))
        return found

    def _build(self, h, knots, a, b):
        segs = []
        lo_lim, hi_lim = a, b

        def add(p, d, w, h0, g):
            segs.append((p, d, w, h0, g))

        for l, r in zip(knots[:-1], knots[1:]):
            hl, hr = h(l), h(r)
            if not (math.isfinite(hl) or math.isfinite(hr)):
                raise ValueError("log-density is -inf on a whole segment")
            if not math.isfinite(hl) or not math.isfinite(hr):
                # density vanishes at a domain end: concavity there makes the
                # tangent at the finite end a valid cover
                y = r if math.isfinite(hr) else l
                g = _num_deriv(h, y, lo_lim, hi_lim)
                if not math.isfinite(g):
                    raise ValueError("log-density slope is not finite")
                add(l, 1.0, r - l, h(y) - g * (y - l), g)
                continue
            mid = 0.5 * (l + r)
            if _second_diff(h, mid) > 0:
                add(l, 1.0, r - l, hl, (hr - hl) / (r - l))
                continue
            gl = _num_deriv(h, l, lo_lim, hi_lim)
            gr = _num_deriv(h, r, lo_lim, hi_lim)
            if abs(gl - gr) < 1e-12 * max(1.0, abs(gl)):
                add(l, 1.0, r - l, hl, gl)
                continue
            z = ((hr - gr * r) - (hl - gl * l)) / (gl - gr)
            z = min(max(z, l), r)
            add(l, 1.0, z - l, hl, gl)
            add(z, 1.0, r - z, hl + gl * (z - l), gr)
        if not math.isfinite(b):
            e = knots[-1]
            s = self.tail_slopes[1]
            if s is None:
                if _second_diff(h, e * 1.5 + 1.0) > 0:
                    raise ValueError("convex right tail needs tail_slopes[1]")
                s = _num_deriv(h, e, lo_lim, hi_lim)
            if s >= 0:
                raise ValueError("unbounded envelope mass on the right tail")
            add(e, 1.0, math.inf, h(e), s)
        if not math.isfinite(a):
            e = knots[0]
            s = self.tail_slopes[0]
            if s is None:
                if _second_diff(h, e * 1.5 - 1.0) > 0:
                    raise ValueError("convex left tail needs tail_slopes[0]")
                s = _num_deriv(h, e, lo_lim, hi_lim)
            if s <= 0:
                raise ValueError("unbounded envelope mass on the left tail")
            add(e, -1.0, math.inf, h(e), -s)
        seg = np.array([x for x in segs if x[2] > 0], dtype=float)
        # lift each piece over any numerical undercut seen on a probe
        for row in seg:
            p, d, w, h0, g = row
            span = w if math.isfinite(w) else 20.0 / max(abs(g), 1e-3)
            margin = 0.0
            for v in np.linspace(0, span, 17)[1:-1]:
                gap = h(p + d * v) - (h0 + g * v)
                if math.isfinite(gap):
                    margin = max(margin, gap)
            row[3] += margin + 1e-12
        top = seg[:, 3].max()
        with np.errstate(over="ignore"):
            gw = seg[:, 4] * seg[:, 2]
            unit = np.where(np.abs(gw) < 1e-12, seg[:, 2], np.expm1(gw) / np.where(seg[:, 4] == 0, 1, seg[:, 4]))
        mass = np.exp(seg[:, 3] - top) * unit
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise ValueError("unbounded envelope mass")
        self.seg = seg
        self.prob = mass / mass.sum()
        self.log_mass = float(top + math.log(mass.sum()))

    def sample(self, n: int, rng: RngStream | int | None = None) -> np.ndarray:
        gen = as_stream(rng).generator
        out = np.empty(n)
        filled = 0
        tried = 0
        accepted = 0
        while filled < n:
            m = max(16, int(1.3 * (n - filled)) + 8)
            idx = gen.choice(len(self.prob), size=m, p=self.prob)
            u = gen.uniform(size=m)
            acc = gen.uniform(size=m)
            p, d, w, h0, g = (self.seg[idx, c] for c in range(5))
            with np.errstate(over="ignore", invalid="ignore"):
                small = np.abs(g * np.where(np.isfinite(w), w, 1.0)) < 1e-12
                v = np.where(small, u * w, np.log1p(u * np.expm1(g * w)) / np.where(g == 0, 1, g))
            y = p + d * v
            env = h0 + g * v
            ok = np.log(acc) < np.asarray(self.logpdf(y), dtype=float) - env
            tried += m
            accepted += int(ok.sum())
            good = y[ok][: n - filled]
            out[filled : filled + len(good)] = good
            filled += len(good)
            if accepted == 0 and tried > 1_000_000:
                raise InversionError("envelope rejects every proposal", 0.0)
        self.last_acceptance = accepted / tried if tried else float("nan")
        return out


def envelope_rejection_sample(
    logpdf: Callable[[np.ndarray], np.ndarray],
    domain: tuple[float, float],
    n: int,
    rng: RngStream | int | None = None,
    **options,
) -> RejectionResult:
    """Draw ``n`` samples from exp(logpdf) on ``domain`` and report acceptance."""
    sampler = EnvelopeSampler(logpdf, domain, **options)
    draws = sampler.sample(n, rng)
    # acceptance measured on the draws of this call
    return RejectionResult(draws, sampler.last_acceptance)
