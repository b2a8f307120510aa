# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: zero-padded separable convolution and block reductions.

Semantics match numpy_backend exactly (same tap order, zero padding). Loops
are arranged tap-outer with contiguous inner ranges so the C compiler can
vectorize the multiply-accumulate.
"""

import numpy as np


def convolve_sep2d(x, taps):
    cdef const double[:, ::1] xv = x
    cdef const double[::1] tv = taps
    cdef Py_ssize_t n0 = xv.shape[0]
    cdef Py_ssize_t n1 = xv.shape[1]
    cdef Py_ssize_t m = tv.shape[0]
    cdef Py_ssize_t r = (m - 1) // 2
    tmp_arr = np.zeros((n0, n1))
    out_arr = np.zeros((n0, n1))
    cdef double[:, ::1] tmp = tmp_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, s, jlo, jhi, off, src
    cdef double w

    with nogil:
        # column pass: tmp[i, j] += taps[s] * x[i, j + r - s] over the valid j range
        for i in range(n0):
            for s in range(m):
                w = tv[s]
                off = r - s
                jlo = 0 if off >= 0 else -off
                jhi = n1 - 1 if off <= 0 else n1 - 1 - off
                for j in range(jlo, jhi + 1):
                    tmp[i, j] += w * xv[i, j + off]
        # row pass: out[i, :] += taps[s] * tmp[i + r - s, :]
        for i in range(n0):
            for s in range(m):
                src = i + r - s
                if src < 0 or src >= n0:
                    continue
                w = tv[s]
                for j in range(n1):
                    out[i, j] += w * tmp[src, j]
    return out_arr


def block_sum(x, factor):
    cdef const double[:, ::1] xv = x
    cdef Py_ssize_t L = factor
    cdef Py_ssize_t m0 = xv.shape[0] // L
    cdef Py_ssize_t m1 = xv.shape[1] // L
    out_arr = np.zeros((m0, m1))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, q, a, b
    cdef double acc
    with nogil:
        for p in range(m0):
            for q in range(m1):
                acc = 0.0
                for a in range(L):
                    for b in range(L):
                        acc += xv[p * L + a, q * L + b]
                out[p, q] = acc
    return out_arr


def block_expand(d, factor):
    cdef const double[:, ::1] dv = d
    cdef Py_ssize_t L = factor
    cdef Py_ssize_t m0 = dv.shape[0]
    cdef Py_ssize_t m1 = dv.shape[1]
    out_arr = np.zeros((m0 * L, m1 * L))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, q, a, b
    cdef double v
    with nogil:
        for p in range(m0):
            for q in range(m1):
                v = dv[p, q]
                for a in range(L):
                    for b in range(L):
                        out[p * L + a, q * L + b] = v
    return out_arr
