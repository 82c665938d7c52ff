"""Pure numpy versions of the compiled loops in ``_core``."""

from __future__ import annotations

import numpy as np


def grid_window_sums(prefix, heights, n_t, k):
    # accumulate column by column so the summation order matches _core
    base = np.arange(k) * n_t
    out = np.zeros(k)
    for j, h in enumerate(heights):
        out += prefix[base + j, h]
    return out


def cpp_scatter(l0, x, y, H, out):
    n, D = H.shape
    k = out.shape[0]
    l = l0[:, None] + np.arange(D)
    inside = np.cumprod((x[:, None] < H) & (l < k), axis=1).astype(bool)
    # np.add.at runs in index order, so additions happen atom by atom
    rows, cols = np.nonzero(inside)
    np.add.at(out, l[rows, cols], y[rows])
    # with nothing examined an atom in range stays alive, as in _core
    return (inside[:, -1] if D else True) & (l0 + D < k)


def fast_convolution(Y):
    Y = np.asarray(Y, dtype=float)
    I, ncol = Y.shape
    k = ncol - I + 1
    Z = Y.copy()
    adds = 0
    for i in range(I - 2, -1, -1):
        Z[i, I - 1 :] = Z[i, I - 1 :] + Z[i + 1, I - 1 :]
        adds += k
    out = Z[0, I - 1 :].copy()
    l = np.arange(k)
    for i in range(1, I):
        live = l >= i  # skip the zero padding columns
        out[live] = out[live] + Z[i, l[live] + I - 1 - i]
        adds += int(live.sum())
    return out, adds


def ambit_scatter(acc, draws, K):
    P, Q = draws.shape
    for a, b in zip(*np.nonzero(K)):
        acc[a : a + P, b : b + Q] += draws


def indicator_codes(yrel, H):
    M, Is = yrel.shape
    It = H.shape[1]
    bits = (yrel[:, :, None] > 0) & (yrel[:, :, None] < H[:, None, :])
    weights = np.left_shift(np.uint64(1), np.arange(Is * It, dtype=np.uint64)).reshape(Is, It)
    return (bits * weights).reshape(M, -1).sum(axis=1, dtype=np.uint64)
