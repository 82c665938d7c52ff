"""Compound Poisson simulation of the jump part of a trawl process."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import TrawlFunction
from .levy import CustomTriplet, Gaussian, LevyMeasure, LevySeed, levy_ito_split, sample_levy_measure
from .rng import RngStream, as_stream


@dataclass
class JumpField:
    """Atoms (t, x, y) of the truncated Poisson random measure."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    eps: float
    window: tuple

    def __len__(self):
        return len(self.t)

    def restrict(self, eps: float) -> "JumpField":
        """Atoms with |y| > eps; used to couple coarser truncations."""
        keep = np.abs(self.y) > eps
        return JumpField(self.t[keep], self.x[keep], self.y[keep], eps, self.window)

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("t,x,y\n")
            for row in zip(self.t.tolist(), self.x.tolist(), self.y.tolist()):
                fh.write(",".join(repr(v) for v in row) + "\n")


def _rate(measure: LevyMeasure | None, eps: float) -> float:
    if measure is None:
        return 0.0
    rate = measure.mass_outside(eps)
    if not math.isfinite(rate):
        raise ValueError("Lévy measure has infinite mass outside (-eps, eps); increase eps")
    return rate


def _compensator(measure: LevyMeasure | None, eps: float) -> float:
    return 0.0 if measure is None else measure.compensator_outside(eps)


def sample_atoms_bounded(trawl: TrawlFunction, measure, k: int, tau: float, rng, eps: float = 0.0) -> JumpField:
    """Poisson atoms uniform on [T + tau, k tau] x [0, phi(0)]."""
    if not trawl.bounded:
        raise ValueError("bounded compound Poisson sampler needs a support bound")
    gen = as_stream(rng).generator
    lo, hi = trawl.support_bound + tau, k * tau
    rate = _rate(measure, eps)
    n = gen.poisson(rate * trawl.height * (hi - lo))
    t = gen.uniform(lo, hi, n)
    x = gen.uniform(0.0, trawl.height, n)
    y = sample_levy_measure(measure, eps, n, gen) if n else np.empty(0)
    return JumpField(t, x, y, eps, ("rect", lo, hi, trawl.height))


def sample_atoms_unbounded(trawl: TrawlFunction, measure, k: int, tau: float, rng, eps: float = 0.0) -> JumpField:
    """Atoms of A_tau (time density phi(t - tau) / Leb(A)) plus [tau, k tau] x [0, phi(0)]."""
    gen = as_stream(rng).generator
    rate = _rate(measure, eps)
    area = trawl.total_area
    n1 = gen.poisson(rate * area)
    # inverse-CDF draw of the time coordinate
    u = gen.uniform(0.0, 1.0, n1)
    t1 = tau + trawl.cumulative_inverse_many(u * area)
    x1 = gen.uniform(0.0, 1.0, n1) * trawl(t1 - tau)
    n2 = gen.poisson(rate * trawl.height * (k - 1) * tau)
    t2 = gen.uniform(tau, k * tau, n2)
    x2 = gen.uniform(0.0, trawl.height, n2)
    y = sample_levy_measure(measure, eps, n1 + n2, gen) if n1 + n2 else np.empty(0)
    return JumpField(np.concatenate([t1, t2]), np.concatenate([x1, x2]), y, eps, ("split", tau, k * tau, trawl.height))


def trawl_sums(trawl: TrawlFunction, atoms: JumpField, k: int, tau: float, block: int | None = None) -> np.ndarray:
    """Sum of y over atoms inside A_{l tau}, l = 1..k.

    Each atom is tested against consecutive trawls starting at the first
    one reaching its time, and the scan stops at the first trawl that
    misses it (phi is monotone), so a bounded trawl costs O(ceil(-T/tau)).
    """
    out = np.zeros(k)
    if len(atoms) == 0:
        return out
    if block is None:
        block = math.ceil(-trawl.support_bound / tau) + 1 if trawl.bounded else 16
    l0 = np.maximum(np.ceil(atoms.t / tau - 1e-12).astype(np.int64) - 1, 0)
    x, y, t = atoms.x, atoms.y, atoms.t
    idx = np.arange(len(t))
    while len(idx):
        offs = l0[idx, None] + 1 + np.arange(block)
        H = np.ascontiguousarray(trawl(t[idx, None] - offs * tau))
        alive = _kernels.cpp_scatter(l0[idx], x[idx], y[idx], H, out)
        idx = idx[alive]
        l0 = l0.copy()
        l0[idx] += block
    return out


def simulate_cpp_bounded(
    trawl: TrawlFunction, measure, k: int, tau: float, rng=None, eps: float = 0.0, return_atoms: bool = False
):
    """Jump part at tau, ..., k tau for a bounded trawl.

    X_l is the sum of jumps inside A_{l tau} minus xi~ Leb(A), where xi~ is
    the integral of y over eps < |y| <= 1.
    """
    atoms = sample_atoms_bounded(trawl, measure, k, tau, rng, eps)
    X = trawl_sums(trawl, atoms, k, tau) - _compensator(measure, eps) * trawl.total_area
    return (X, atoms) if return_atoms else X


def simulate_cpp_unbounded(
    trawl: TrawlFunction, measure, eps: float, k: int, tau: float, rng=None, return_atoms: bool = False
):
    atoms = sample_atoms_unbounded(trawl, measure, k, tau, rng, eps)
    X = trawl_sums(trawl, atoms, k, tau) - _compensator(measure, eps) * trawl.total_area
    return (X, atoms) if return_atoms else X


def simulate_cpp(trawl, measure, k, tau, rng=None, eps=0.0, return_atoms=False):
    if trawl.bounded:
        return simulate_cpp_bounded(trawl, measure, k, tau, rng, eps, return_atoms)
    return simulate_cpp_unbounded(trawl, measure, eps, k, tau, rng, return_atoms)


def simulate_cpp_coupled(trawl, measure, eps_list, k: int, tau: float, rng=None) -> dict:
    """Truncated paths for several eps sharing one atom set.

    Atoms are drawn at the smallest eps; a coarser level keeps the subset
    with |y| > eps and its own compensator.
    """
    eps_list = sorted(float(e) for e in eps_list)
    sampler = sample_atoms_bounded if trawl.bounded else sample_atoms_unbounded
    atoms = sampler(trawl, measure, k, tau, rng, eps_list[0])
    out = {}
    for e in eps_list:
        sub = atoms.restrict(e)
        out[e] = trawl_sums(trawl, sub, k, tau) - _compensator(measure, e) * trawl.total_area
    return out


def truncation_mse(measure: LevyMeasure | None, eps: float, area: float) -> float:
    """area times the integral of y^2 over |y| < eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if measure is None:
        return 0.0
    return area * measure.second_inside(eps)


def simulate_trawl_full(
    trawl: TrawlFunction,
    seed: LevySeed,
    k: int,
    tau: float,
    rng=None,
    eps: float = 0.0,
    gaussian: str = "slice",
) -> np.ndarray:
    """Gaussian part (slice or Cholesky) plus independent jump part (compound Poisson)."""
    from .slices import simulate_gaussian_cholesky, simulate_slice

    stream = as_stream(rng)
    g, j = levy_ito_split(seed)
    assert isinstance(g, Gaussian) and isinstance(j, CustomTriplet)
    out = np.zeros(k)
    if g.mu != 0 or g.sigma2 != 0:
        if gaussian == "cholesky":
            out += simulate_gaussian_cholesky(trawl, k, tau, g.mu, g.sigma2, stream.child("gaussian"))
        else:
            out += simulate_slice(trawl, g, k, tau, stream.child("gaussian"))
    if j.measure is not None:
        out += simulate_cpp(trawl, j.measure, k, tau, stream.child("jumps"), eps=eps)
    return out
