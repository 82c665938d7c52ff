"""Exact slice-partition simulation of trawl processes.

The trawls A_{l tau}, l = 1..k, cut the plane into slices. Slice (i, c) lies
in time band c and belongs to exactly the trawls c, ..., c + i - 1, so
X_l = sum over i of the slices (i, c) with l - i < c <= l.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from . import _kernels
from .geometry import SlicePlan, TrawlFunction, _guard, slice_areas_bounded, slice_areas_unbounded
from .levy import UNDEFINED, LevySeed, is_defined, sample_areas
from .rng import RngStream, as_stream


def filter_matrix(I: int) -> np.ndarray:
    """I x I ones on and below the anti-diagonal."""
    return np.fliplr(np.tri(I))


def naive_convolution(Y, F) -> np.ndarray:
    """[Y * F]_l = sum_ij Y[i, j + l - 1] F[i, j], stride 1, summed left to right."""
    Y = np.asarray(Y, dtype=float)
    F = np.asarray(F, dtype=float)
    if Y.ndim != 2 or F.ndim != 2 or Y.shape[0] != F.shape[0] or Y.shape[1] < F.shape[1]:
        raise ValueError(f"incompatible shapes {Y.shape} and {F.shape}")
    I, J = F.shape
    out = np.zeros(Y.shape[1] - J + 1)
    for l in range(len(out)):
        acc = 0.0
        for i in range(I):
            for j in range(J):
                acc += Y[i, j + l] * F[i, j]
        out[l] = acc
    return out


def fast_convolution(Y, return_count: bool = False):
    """Convolution of a padded slice matrix with :func:`filter_matrix`.

    ``Y`` is I x (k + I - 1) with its first I - 1 columns zero. Columns are
    summed from the bottom, then anti-diagonals are read off. With
    ``return_count`` the number of scalar additions performed is returned.
    """
    Y = np.ascontiguousarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] < Y.shape[0]:
        raise ValueError("slice matrix must be I x (k + I - 1)")
    X, adds = _kernels.fast_convolution(Y)
    return (X, int(adds)) if return_count else X


def pairwise_additions(I: int, k: int) -> int:
    """Additions made by :func:`fast_convolution` for k >= I."""
    return k * (I - 1) + I * (I - 1) // 2 + (k - I) * (I - 1)


def slice_matrix_bounded(plan: SlicePlan, seed: LevySeed, rng) -> np.ndarray:
    """Padded I x (k + I - 1) matrix of slice values."""
    I, k = plan.I, plan.k
    areas = np.empty((I, k))
    areas[:, 0] = plan.areas[:, 0]
    areas[:, 1:] = plan.areas[:, 1:2]
    Y = np.zeros((I, k + I - 1))
    Y[:, I - 1 :] = sample_areas(seed, areas, rng)
    return Y


def simulate_slice_bounded(trawl: TrawlFunction, seed: LevySeed, k: int, tau: float, rng=None) -> np.ndarray:
    plan = slice_areas_bounded(trawl, tau, k)
    gen = as_stream(rng).generator
    return fast_convolution(slice_matrix_bounded(plan, seed, gen))


def _error_report(seed: LevySeed, dropped: np.ndarray) -> dict:
    m, v = seed.mean(), seed.variance()
    return {
        "mean": (m * dropped).tolist() if is_defined(m) else [UNDEFINED] * len(dropped),
        "var": (v * dropped).tolist() if is_defined(v) else [UNDEFINED] * len(dropped),
    }


def simulate_slice_unbounded(
    trawl: TrawlFunction, seed: LevySeed, k: int, tau: float, n_trunc: int | None = None, rng=None, block: int = 1 << 18
):
    """Staircase simulation, streamed in blocks of rows holding about ``block`` areas.

    Returns the path and a report ``{"mean": [...], "var": [...]}`` of the
    error moments per trawl caused by dropping rows beyond ``n_trunc``.
    """
    plan = slice_areas_unbounded(trawl, tau, k, n_trunc)
    gen = as_stream(rng).generator
    X = np.zeros(k)
    for rows, areas in _row_blocks(plan, block):
        vals = sample_areas(seed, areas, gen)
        cs = np.zeros((len(rows), k + 1))
        np.cumsum(vals, axis=1, out=cs[:, 1:])
        # row i, column c feeds trawls c..c+i-1
        lo = np.maximum(np.arange(1, k + 1)[None, :] - rows[:, None], 0)
        X += (cs[:, 1:] - np.take_along_axis(cs, lo, axis=1)).sum(axis=0)
    return X, _error_report(seed, plan.dropped_per_trawl())


def _row_blocks(plan: SlicePlan, block: int):
    """Staircase rows in blocks of about ``block`` areas, zero padded to width k."""
    k, a = plan.k, np.append(plan.a, 0.0)
    n = plan.rows()
    per = max(1, block // k)
    cols = np.arange(k)
    for i0 in range(1, n + 1, per):
        rows = np.arange(i0, min(n, i0 + per - 1) + 1)
        width = k + 1 - rows
        first = a[rows - 1]
        areas = np.where(cols[None, :] < width[:, None], (first - a[rows])[:, None], 0.0)
        areas[:, 0] = first
        areas[np.arange(len(rows)), width - 1] = first
        yield rows, _guard(areas, plan.total_area)


def simulate_slice(trawl: TrawlFunction, seed: LevySeed, k: int, tau: float, rng=None, n_trunc: int | None = None):
    """Bounded plan when the trawl has a support bound, else the staircase."""
    if trawl.bounded:
        return simulate_slice_bounded(trawl, seed, k, tau, rng)
    return simulate_slice_unbounded(trawl, seed, k, tau, n_trunc, rng)[0]


def gaussian_covariance(trawl: TrawlFunction, k: int, tau: float, sigma2: float) -> np.ndarray:
    lags = np.array([trawl.cumulative(-h * tau) if h else trawl.total_area for h in range(k)])
    return sigma2 * linalg.toeplitz(lags)


def simulate_gaussian_cholesky(trawl: TrawlFunction, k: int, tau: float, mu: float, sigma2: float, rng=None):
    """Gaussian trawl path by a Cholesky factor of its Toeplitz covariance."""
    gen = as_stream(rng).generator
    S = gaussian_covariance(trawl, k, tau, sigma2)
    mean = mu * trawl.total_area
    z = gen.standard_normal(k)
    if sigma2 == 0:
        return np.full(k, mean)
    for jitter in (0.0, 1e-12 * S[0, 0]):
        try:
            H = linalg.cholesky(S + jitter * np.eye(k), lower=True)
            return mean + H @ z
        except linalg.LinAlgError:
            continue
    raise ArithmeticError("covariance matrix is not numerically positive definite")
