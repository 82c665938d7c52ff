"""Grid discretisation simulator with a sliding window of cells."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import TrawlFunction
from .levy import LevySeed, is_defined, sample_areas
from .rng import RngStream, as_stream


def _floor_tol(q: float) -> int:
    r = round(q)
    return int(r) if abs(q - r) < 1e-9 else math.floor(q)


@dataclass(frozen=True)
class GridConfig:
    """Cells of size dt x dx covering [T, 0] x [0, phi(0)].

    ``n_t`` cells per tau along time, ``n_x`` rows in space. By default
    dx = phi(0) / n_x; pass ``dx`` to use a step that does not divide phi(0),
    in which case n_x counts the rows lying below phi(0). T is moved down to
    a multiple of dt.
    """

    n_t: int
    n_x: int
    tau: float
    k: int
    T: float
    dx: float | None = None

    def __post_init__(self):
        if self.n_t < 1 or self.n_x < 1 or self.k < 1:
            raise ValueError("n_t, n_x and k must be positive")
        if not self.T < 0 or not self.tau > 0:
            raise ValueError("need T < 0 and tau > 0")

    @classmethod
    def from_delta(cls, trawl: TrawlFunction, tau: float, k: int, T: float, delta: float, dt: float | None = None):
        """Square-ish grid: dx = delta and dt the largest step <= delta dividing tau."""
        dt = delta if dt is None else dt
        n_t = max(1, math.ceil(tau / dt - 1e-9))
        n_x = max(1, _floor_tol(trawl.height / delta))
        return cls(n_t, n_x, tau, k, T, dx=delta)

    def dt(self) -> float:
        return self.tau / self.n_t

    def dx_for(self, trawl: TrawlFunction) -> float:
        return self.dx if self.dx is not None else trawl.height / self.n_x

    def n_cols(self) -> int:
        return -_floor_tol(self.T / self.dt())

    def horizon(self) -> float:
        """Effective truncation time, a multiple of dt."""
        return -self.n_cols() * self.dt()


def column_heights(trawl: TrawlFunction, cfg: GridConfig) -> np.ndarray:
    """Rows included in each window column, counted from the bottom."""
    dt, dx, N = cfg.dt(), cfg.dx_for(trawl), cfg.n_cols()
    left = cfg.horizon() + dt * np.arange(N)  # top-left corner times
    h = np.floor(trawl(left) / dx + 1e-12).astype(np.int64)
    return np.clip(h, 0, cfg.n_x)


def compute_indicator(trawl: TrawlFunction, cfg: GridConfig) -> np.ndarray:
    """Boolean N_x x N matrix; row i (from 1) and column j (from 1) are included
    iff i * dx <= phi(T + (j - 1) dt)."""
    h = column_heights(trawl, cfg)
    ind = np.arange(1, cfg.n_x + 1)[:, None] <= h[None, :]
    if not ind.any():
        warnings.warn("no grid cell fits under the trawl function", RuntimeWarning, stacklevel=2)
    return ind


def included_area(trawl: TrawlFunction, cfg: GridConfig) -> float:
    return float(column_heights(trawl, cfg).sum()) * cfg.dt() * cfg.dx_for(trawl)


def simulate_grid(
    trawl: TrawlFunction,
    seed: LevySeed,
    cfg: GridConfig,
    rng: RngStream | int | None = None,
    chunk: int = 4096,
) -> np.ndarray:
    """Values at tau, ..., k tau from iid cell draws inside a sliding window.

    Columns are drawn in blocks and only the prefix sums still needed by the
    next trawl are retained, so memory stays O(window + chunk).
    """
    gen = as_stream(rng).generator
    heights = column_heights(trawl, cfg)
    N, n_t, k = len(heights), cfg.n_t, cfg.k
    rows = int(heights.max()) if N else 0
    cell = cfg.dt() * cfg.dx_for(trawl)
    out = np.empty(k)
    if rows == 0:
        out[:] = 0.0
        return out
    per_block = max(1, chunk // n_t)  # trawls per block
    buf = np.zeros((0, rows + 1))  # prefix sums, first column = 0
    first = 0  # global index of buf[0]
    drawn = 0
    for l0 in range(0, k, per_block):
        l1 = min(k, l0 + per_block)
        need = (l1 - 1) * n_t + N
        if need > drawn:
            cells = sample_areas(seed, np.full((need - drawn, rows), cell), gen)
            pref = np.zeros((need - drawn, rows + 1))
            np.cumsum(cells, axis=1, out=pref[:, 1:])
            buf = np.concatenate([buf, pref])
            drawn = need
        off = l0 * n_t - first
        out[l0:l1] = _kernels.grid_window_sums(np.ascontiguousarray(buf[off:]), heights, n_t, l1 - l0)
        # drop columns no later trawl touches
        keep = l1 * n_t - first
        buf = buf[keep:]
        first += keep
    return out


def grid_mse_bound(trawl: TrawlFunction, seed: LevySeed, T: float, dt: float, dx: float) -> float:
    """C^2 E[L']^2 + C Var(L') with C = |T| dx + phi(0) dt + G(T)."""
    m, v = seed.mean(), seed.variance()
    if not (is_defined(v) and is_defined(m)):
        raise ValueError("MSE bound needs a seed with finite variance")
    C = abs(T) * dx + trawl.height * dt + trawl.cumulative(T)
    return C * C * m * m + C * v


def default_horizon(trawl: TrawlFunction, rel: float = 1e-3, dx: float | None = None) -> float:
    """Truncation time for a grid run.

    Bounded trawls use their support. Otherwise the tail holding ``rel`` of
    the area, but no earlier than where phi drops below one cell height
    ``dx``: columns further back hold no cells, so cutting there changes
    nothing except the window length.
    """
    if trawl.bounded:
        return trawl.support_bound
    T = trawl.horizon(rel)
    if dx is not None and dx < trawl.height:
        T = max(T, trawl.inverse(dx))
    return T
