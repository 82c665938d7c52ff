"""Simple and general ambit fields on a (space, time) lattice.

Ambit sets A_ij = {s < j tau, i dx < y < i dx + phi(s - j tau)}. A minimal
slice is a piece of A_11 with time in (0, tau) lying above A_01, labelled by
the indicator K[a, b] = 1 iff it lies inside A_{a+1, b+1}. Translating the
minimal slices over the lattice partitions every ambit set.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import _kernels
from .geometry import TrawlFunction, _row_to_trawls
from .kernel import Constant, Kernel, reduce_separable, TimeShifted, _mvn_draws
from .levy import Gaussian, LevyMeasure, LevySeed, is_defined, levy_ito_split, sample_areas, sample_levy_measure
from .rng import RngStream, as_stream
from .slices import simulate_slice_unbounded

TABLE_VERSION = 1


@dataclass
class MinimalSliceTable:
    """Estimated minimal-slice areas keyed by indicator code.

    Bit a * I_t + b of a key is K[a, b]. ``points`` holds up to
    ``keep_points`` accepted sample points (t, y) per key, relative to A_11.
    """

    I_s: int
    I_t: int
    tau: float
    dx: float
    height: float
    N: int
    keys: list
    counts: np.ndarray
    trawl_name: str = ""
    points: dict = field(default_factory=dict)

    @property
    def box_area(self) -> float:
        return self.tau * self.height

    @property
    def areas(self) -> np.ndarray:
        return self.box_area * self.counts / self.N

    @property
    def stderr(self) -> np.ndarray:
        p = self.counts / self.N
        return self.box_area * np.sqrt(p * (1 - p) / self.N)

    @property
    def coverage_bound(self) -> float:
        """Slices smaller than this are likely absent from the table."""
        return 3.0 * self.box_area / self.N

    def indicator(self, key: int) -> np.ndarray:
        n = self.I_s * self.I_t
        bits = [(key >> j) & 1 for j in range(n)]
        return np.array(bits, dtype=bool).reshape(self.I_s, self.I_t)

    def items(self):
        for key, area, se in zip(self.keys, self.areas, self.stderr):
            yield key, self.indicator(key), float(area), float(se)

    # -- persistence ------------------------------------------------------

    def save(self, path: str) -> None:
        """Binary table plus a readable ``<path>.csv`` (indicator_bits,area,stderr)."""
        meta = {
            "version": TABLE_VERSION,
            "I_s": self.I_s,
            "I_t": self.I_t,
            "tau": self.tau,
            "dx": self.dx,
            "height": self.height,
            "N": self.N,
            "trawl": self.trawl_name,
        }
        nbytes = (self.I_s * self.I_t + 7) // 8
        keybytes = np.frombuffer(b"".join(int(k).to_bytes(nbytes, "little") for k in self.keys), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), keys=keybytes, counts=self.counts)
        with open(path + ".csv", "w") as fh:
            fh.write("indicator_bits,area,stderr\n")
            for _, K, a, se in self.items():
                fh.write(f"{''.join('1' if b else '0' for b in K.ravel())},{a!r},{se!r}\n")

    @classmethod
    def load(cls, path: str) -> "MinimalSliceTable":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("version") != TABLE_VERSION:
                raise ValueError(f"unsupported table version {meta.get('version')}")
            nbytes = (meta["I_s"] * meta["I_t"] + 7) // 8
            raw = z["keys"].tobytes()
            keys = [int.from_bytes(raw[i : i + nbytes], "little") for i in range(0, len(raw), nbytes)]
            counts = z["counts"].astype(np.int64)
        return cls(
            meta["I_s"], meta["I_t"], meta["tau"], meta["dx"], meta["height"], meta["N"], keys, counts, meta["trawl"]
        )


def _codes(yrel, H):
    Is, It = yrel.shape[1], H.shape[1]
    if Is * It <= 64:
        return [int(c) for c in _kernels.indicator_codes(np.ascontiguousarray(yrel), np.ascontiguousarray(H))]
    bits = (yrel[:, :, None] > 0) & (yrel[:, :, None] < H[:, None, :])
    packed = np.packbits(bits.reshape(len(yrel), -1), axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def default_shape(trawl: TrawlFunction, tau: float, dx: float) -> tuple[int, int]:
    if not trawl.bounded:
        raise ValueError("bounded trawl required; pass I_t explicitly")
    I_s = max(1, math.ceil(trawl.height / dx - 1e-12))
    I_t = max(1, math.ceil(-trawl.support_bound / tau - 1e-12))
    return I_s, I_t


def slice_estimation(
    trawl: TrawlFunction,
    tau: float,
    dx: float,
    N: int,
    rng=None,
    I_t: int | None = None,
    keep_points: int = 0,
    batch: int | None = None,
) -> MinimalSliceTable:
    """Monte Carlo areas of the minimal slices.

    Points are uniform on [0, tau] x [dx, dx + phi(0)]; a point counts if it
    lies in A_11 but not in A_01, and its key records the ambit sets
    A_{a+1, b+1} containing it (0 < y - (a+1) dx < phi(t - (b+1) tau)).
    """
    if tau <= 0 or dx <= 0:
        raise ValueError("tau and dx must be positive")
    if N < 1:
        raise ValueError("N must be positive")
    I_s = max(1, math.ceil(trawl.height / dx - 1e-12))
    if I_t is None:
        I_t = default_shape(trawl, tau, dx)[1]
    stream = as_stream(rng)
    if batch is None:
        batch = max(1024, (1 << 23) // (I_s * I_t))
    counts: dict[int, int] = {}
    points: dict[int, list] = {}
    a_off = dx * np.arange(1, I_s + 1)
    b_off = tau * np.arange(1, I_t + 1)
    for bi, start in enumerate(range(0, N, batch)):
        m = min(batch, N - start)
        gen = stream.child(bi).generator  # one stream per batch keeps batches mergeable
        t = gen.uniform(0.0, tau, m)
        y = gen.uniform(dx, dx + trawl.height, m)
        h1 = trawl(t - tau)
        ok = (y >= h1) & (y - dx < h1)
        t, y = t[ok], y[ok]
        if not len(t):
            continue
        yrel = y[:, None] - a_off[None, :]
        H = trawl(t[:, None] - b_off[None, :])
        codes = _codes(yrel, H)
        uniq, inv, cnt = np.unique(np.array(codes, dtype=object), return_inverse=True, return_counts=True)
        for u, c in zip(uniq.tolist(), cnt.tolist()):
            counts[u] = counts.get(u, 0) + c
        if keep_points:
            for j, u in enumerate(uniq.tolist()):
                bucket = points.setdefault(u, [])
                need = keep_points - len(bucket)
                if need > 0:
                    sel = np.nonzero(inv == j)[0][:need]
                    bucket.extend(zip(t[sel].tolist(), y[sel].tolist()))
    keys = sorted(counts)
    return MinimalSliceTable(
        I_s,
        I_t,
        tau,
        dx,
        trawl.height,
        N,
        keys,
        np.array([counts[k] for k in keys], dtype=np.int64),
        trawl.name,
        {k: np.array(v) for k, v in points.items()},
    )


def set_decomposition(table: MinimalSliceTable) -> list[tuple[tuple[int, int], int, float]]:
    """Pieces of A_11: (lattice offset, key, area) for each translated minimal slice inside it.

    A slice with indicator K placed at lattice position (1 - a, 1 - b) lies
    in A_11 iff K[a, b].
    """
    out = []
    for key, K, area, _ in table.items():
        for a, b in zip(*np.nonzero(K)):
            out.append(((1 - int(a), 1 - int(b)), key, area))
    return out


def slice_partition_field(table: MinimalSliceTable, seed: LevySeed, k_t: int, k_s: int, rng=None) -> np.ndarray:
    """k_s x k_t field (rows space, columns time) from one precomputed table."""
    gen = as_stream(rng).generator
    I_s, I_t = table.I_s, table.I_t
    P, Q = k_s + I_s - 1, k_t + I_t - 1
    acc = np.zeros((P + I_s - 1, Q + I_t - 1))
    for key, K, area, _ in table.items():
        if area <= 0:
            continue
        draws = np.ascontiguousarray(sample_areas(seed, np.full((P, Q), area), gen))
        _kernels.ambit_scatter(acc, draws, np.ascontiguousarray(K))
    return acc[I_s - 1 : I_s - 1 + k_s, I_t - 1 : I_t - 1 + k_t].copy()


def overlap_threshold(trawl: TrawlFunction, tau: float, dx: float):
    """T~ = phi^{-1}(dx) + tau and T = floor(T~ / tau) tau; None if phi(0) <= dx."""
    if trawl.height <= dx:
        return None
    tt = trawl.inverse(dx) + tau
    return tt, math.floor(tt / tau + 1e-12) * tau


def unbounded_table_width(trawl: TrawlFunction, tau: float, dx: float, k_t: int) -> int:
    """Indicator width k_t - T/tau of the tables used above T."""
    thr = overlap_threshold(trawl, tau, dx)
    if thr is None:
        raise ValueError("phi(0) <= dx: no minimal slices are needed")
    return k_t - int(round(thr[1] / tau))


def strip_areas(trawl: TrawlFunction, tau: float, k_t: int, T: float) -> np.ndarray:
    """Areas of the nested strips S_j below time T, j = 1..k_t."""
    G = np.array([trawl.cumulative(T - j * tau) for j in range(1, k_t + 2)])
    out = G[:-1] - G[1:]
    out[-1] = G[k_t - 1]
    return out


def slice_partition_field_unbounded(
    trawl: TrawlFunction,
    seed: LevySeed,
    k_t: int,
    k_s: int,
    tau: float,
    dx: float,
    N: int,
    rng=None,
    table: MinimalSliceTable | None = None,
) -> np.ndarray:
    """Field for an unbounded trawl.

    Below T no two rows overlap and the sets of one row are nested, so that
    part is a stack of independent strips. Above T minimal slices are used,
    with indicators wide enough to reach every set up to k_t.
    """
    stream = as_stream(rng)
    thr = overlap_threshold(trawl, tau, dx)
    if thr is None:
        # no spatial overlap: every row is a one-dimensional trawl process
        rows = [simulate_slice_unbounded(trawl, seed, k_t, tau, None, stream.child(f"row{p}"))[0] for p in range(k_s)]
        return np.array(rows)
    _, T = thr
    m0 = int(round(T / tau))
    gen = stream.child("strips").generator
    areas = strip_areas(trawl, tau, k_t, T)
    D = sample_areas(seed, np.broadcast_to(areas, (k_s, k_t)), gen)
    field_lo = np.cumsum(D[:, ::-1], axis=1)[:, ::-1]
    W = k_t - m0
    if table is None:
        table = slice_estimation(trawl, tau, dx, N, stream.child("table"), I_t=W)
    elif table.I_t != W:
        raise ValueError("table width does not match k_t - T/tau")
    I_s = table.I_s
    P = k_s + I_s - 1
    acc = np.zeros((P + I_s - 1, 2 * W - 1))
    g2 = stream.child("slices").generator
    for key, K, area, _ in table.items():
        if area <= 0:
            continue
        draws = np.ascontiguousarray(sample_areas(seed, np.full((P, W), area), g2))
        _kernels.ambit_scatter(acc, draws, np.ascontiguousarray(K))
    hi = acc[I_s - 1 : I_s - 1 + k_s, -m0 : -m0 + k_t]
    return field_lo + hi


def field_autocovariance(trawl: TrawlFunction, dt: float, dx: float, var: float | LevySeed = 1.0) -> float:
    """Cov(Y_t(x), Y_{t+dt}(x+dx)) = Var(L') Leb(A_t(x) intersect A_{t+dt}(x+dx)).

    dt >= 0; dx may have either sign. The overlap height at u = s - t is
    min(phi(u), dx + phi(u - dt)) - max(0, dx).
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if isinstance(var, LevySeed):
        v = var.variance()
        if not is_defined(v):
            raise ValueError("seed has infinite variance")
        var = v
    lo = max(0.0, dx)

    def h(u):
        return max(0.0, min(float(trawl(u)), dx + float(trawl(u - dt))) - lo)

    a = trawl.support_bound if trawl.bounded else trawl.horizon(1e-13)
    pts = [p for p in (-dt, a + dt) if a < p < 0]
    val = integrate.quad(h, a, 0.0, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-11)[0]
    return var * val


# ---------------------------------------------------------------------------
# general ambit fields


@dataclass(frozen=True)
class VolatilityField:
    """sigma^2 constant on cells of a (time, space) lattice."""

    t0: float
    dt: float
    x0: float
    dx: float
    sigma2: np.ndarray

    def sigma(self, t, x):
        i = np.floor((np.asarray(t) - self.t0) / self.dt).astype(np.int64)
        j = np.floor((np.asarray(x) - self.x0) / self.dx).astype(np.int64)
        nt, nx = self.sigma2.shape
        if np.any(i < 0) or np.any(i >= nt) or np.any(j < 0) or np.any(j >= nx):
            raise ValueError("point outside the volatility field")
        return np.sqrt(self.sigma2[i, j])


def _parts(kernel: Kernel):
    if isinstance(kernel, TimeShifted):
        kernel = reduce_separable(kernel)
    return kernel.terms()


def simulate_general_ambit(
    trawl: TrawlFunction,
    kernel: Kernel,
    vol: VolatilityField | None,
    seed: LevySeed,
    k_t: int,
    k_s: int,
    tau: float,
    dx: float,
    eps: float = 0.0,
    N: int = 10**6,
    rng=None,
    table: MinimalSliceTable | None = None,
    keep_points: int = 2000,
) -> np.ndarray:
    """Y_q(p) = integral over A_pq of K_{q tau}(tbar, xbar) sigma(tbar, xbar) L(dtbar, dxbar).

    Gaussian part: one joint draw per minimal slice and lattice position, with
    the kernel integrals estimated from the sample points stored in the table.
    Jump part: compound Poisson atoms weighted by K sigma at their location.
    The trawl must be bounded.
    """
    if not trawl.bounded:
        raise ValueError("general ambit fields need a bounded trawl")
    stream = as_stream(rng)
    if table is None:
        table = slice_estimation(trawl, tau, dx, N, stream.child("table"), keep_points=keep_points)
    elif not table.points:
        raise ValueError("table carries no sample points; estimate it with keep_points > 0")
    g, j = levy_ito_split(seed)
    parts = _parts(kernel)
    M = len(parts)
    I_s, I_t = table.I_s, table.I_t
    P, Q = k_s + I_s - 1, k_t + I_t - 1
    # lattice position (p, q), 0-based, sits at real index (p - I_s + 2, q - I_t + 2)
    p_shift = (np.arange(P) - I_s + 1) * dx
    q_shift = (np.arange(Q) - I_t + 1) * tau
    acc = np.zeros((M, P + I_s - 1, Q + I_t - 1))
    mean_acc = np.zeros_like(acc)
    gen = stream.child("gauss").generator
    for key, K, area, _ in table.items():
        pts = table.points.get(key)
        if area <= 0 or pts is None or not len(pts):
            continue
        T = pts[None, None, :, 0] + q_shift[None, :, None]
        X = pts[None, None, :, 1] + p_shift[:, None, None]
        T, X = np.broadcast_arrays(T, X)
        sig = vol.sigma(T, X) if vol is not None else np.ones(T.shape)
        hv = np.stack([np.broadcast_to(h(T, X), T.shape) * sig for _, h in parts], axis=-1)  # (P, Q, n, M)
        m1 = area * hv.mean(axis=2)
        m2 = area * np.einsum("pqna,pqnb->pqab", hv, hv) / hv.shape[2]
        draws = _mvn_draws((g.mu * m1).reshape(-1, M), (g.sigma2 * m2).reshape(-1, M, M), gen).reshape(P, Q, M)
        Kc = np.ascontiguousarray(K)
        for m in range(M):
            _kernels.ambit_scatter(acc[m], np.ascontiguousarray(draws[..., m]), Kc)
            _kernels.ambit_scatter(mean_acc[m], np.ascontiguousarray(m1[..., m]), Kc)
    cs = slice(I_s - 1, I_s - 1 + k_s)
    ct = slice(I_t - 1, I_t - 1 + k_t)
    times = tau * np.arange(1, k_t + 1)
    F = np.stack([np.broadcast_to(f(times), (k_t,)) for f, _ in parts])  # (M, k_t)
    out = np.einsum("mt,mst->st", F, acc[:, cs, ct])
    if j.measure is not None:
        out += _ambit_jumps(trawl, kernel, vol, j.measure, eps, k_t, k_s, tau, dx, stream.child("jumps"))
        comp = j.measure.compensator_outside(eps)
        if comp:
            out -= comp * np.einsum("mt,mst->st", F, mean_acc[:, cs, ct])
    return out


def _ambit_jumps(trawl, kernel, vol, measure: LevyMeasure, eps, k_t, k_s, tau, dx, rng):
    gen = as_stream(rng).generator
    t_lo, t_hi = tau + trawl.support_bound, k_t * tau
    x_lo, x_hi = dx, k_s * dx + trawl.height
    rate = measure.mass_outside(eps)
    n = gen.poisson(rate * (t_hi - t_lo) * (x_hi - x_lo))
    t = gen.uniform(t_lo, t_hi, n)
    x = gen.uniform(x_lo, x_hi, n)
    y = sample_levy_measure(measure, eps, n, gen) if n else np.empty(0)
    out = np.zeros((k_s, k_t))
    if not n:
        return out
    sig = vol.sigma(t, x) if vol is not None else np.ones(n)
    q0 = np.maximum(np.ceil(t / tau - 1e-12).astype(np.int64), 1)
    I_t = math.ceil(-trawl.support_bound / tau - 1e-12) + 1
    for p in range(1, k_s + 1):
        rel = x - p * dx
        live = (rel > 0) & (rel < trawl.height)
        if not live.any():
            continue
        idx = np.nonzero(live)[0]
        for o in range(I_t):
            q = q0[idx] + o
            inside = (q <= k_t) & (rel[idx] < trawl(t[idx] - q * tau))
            sel = idx[inside]
            if len(sel):
                vals = y[sel] * kernel(q[inside] * tau, t[sel], x[sel]) * sig[sel]
                np.add.at(out[p - 1], q[inside] - 1, vals)
    return out
