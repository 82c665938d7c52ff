# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures mirror ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()


def grid_window_sums(const double[:, ::1] prefix, const int64_t[::1] heights, Py_ssize_t n_t, Py_ssize_t k):
    cdef Py_ssize_t l, j, n = heights.shape[0]
    cdef double acc
    out = np.empty(k)
    cdef double[::1] o = out
    for l in range(k):
        acc = 0.0
        for j in range(n):
            acc += prefix[l * n_t + j, heights[j]]
        o[l] = acc
    return out


def cpp_scatter(const int64_t[::1] l0, const double[::1] x, const double[::1] y,
                const double[:, ::1] H, double[::1] out):
    """Add y_i to trawls l0_i, l0_i+1, ... while x_i < H[i, offset].

    Returns a mask of atoms still inside the last examined trawl.
    """
    cdef Py_ssize_t i, o, n = x.shape[0], D = H.shape[1], k = out.shape[0]
    cdef int64_t l
    alive = np.zeros(n, dtype=np.bool_)
    cdef cnp.npy_bool[::1] a = alive
    for i in range(n):
        for o in range(D):
            l = l0[i] + o
            if l >= k or not (x[i] < H[i, o]):
                break
            out[l] += y[i]
        else:
            if l0[i] + D < k:
                a[i] = True
    return alive


def fast_convolution(const double[:, ::1] Y):
    """Bottom-up column cumsums then anti-diagonal sums; returns (X, additions)."""
    cdef Py_ssize_t I = Y.shape[0], ncol = Y.shape[1], k = ncol - I + 1
    cdef Py_ssize_t i, c, l, p
    cdef long long adds = 0
    Z = np.array(Y, dtype=np.float64, copy=True)
    cdef double[:, ::1] z = Z
    out = np.zeros(k)
    cdef double[::1] o = out
    for c in range(I - 1, ncol):
        for i in range(I - 2, -1, -1):
            z[i, c] = z[i, c] + z[i + 1, c]
            adds += 1
    for l in range(k):
        o[l] = z[0, l + I - 1]
        for i in range(1, I):
            p = l + I - 1 - i
            if p < I - 1:
                break
            o[l] = o[l] + z[i, p]
            adds += 1
    return out, adds


def ambit_scatter(double[:, ::1] acc, const double[:, ::1] draws, const cnp.npy_bool[:, ::1] K):
    cdef Py_ssize_t P = draws.shape[0], Q = draws.shape[1]
    cdef Py_ssize_t a, b, p, q
    for a in range(K.shape[0]):
        for b in range(K.shape[1]):
            if not K[a, b]:
                continue
            for p in range(P):
                for q in range(Q):
                    acc[p + a, q + b] += draws[p, q]


def indicator_codes(const double[:, ::1] yrel, const double[:, ::1] H):
    """Bit (a * I_t + b) set iff 0 < yrel[m, a] < H[m, b]."""
    cdef Py_ssize_t m, a, b, M = yrel.shape[0], Is = yrel.shape[1], It = H.shape[1]
    cdef uint64_t code
    out = np.empty(M, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    for m in range(M):
        code = 0
        for a in range(Is):
            for b in range(It):
                if 0.0 < yrel[m, a] < H[m, b]:
                    code |= (<uint64_t>1) << (a * It + b)
        o[m] = code
    return out
