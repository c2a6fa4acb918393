# cython: language_level=3
"""Compiled path reduction kernels (see ``_kernels_py`` for the contract)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

DEF MAXN = 64


def reduce_paths(
    const double[:, :, ::1] X,
    const double[:, ::1] scale,
    const double[:, ::1] shift,
    const double[:, ::1] drift_coef,
    const double[:, ::1] drift,
    int j,
    double level,
    const long[::1] strides,
    long offset,
    long count_upto,
    long start=0,
):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t R = X.shape[1]
    cdef Py_ssize_t m = X.shape[2]
    cdef Py_ssize_t S = strides.shape[0]
    if n > MAXN:
        raise ValueError("at most 64 processes")
    if j < 1 or j > n:
        raise ValueError("order index out of range")
    maxes_arr = np.full((R, S), -np.inf)
    counts_arr = np.zeros(R, dtype=np.int64)
    row_arr = np.empty(m)
    cdef double[:, ::1] maxes = maxes_arr
    cdef long long[::1] counts = counts_arr
    cdef double[::1] row = row_arr
    cdef double buf[MAXN]
    cdef double sc[MAXN]
    cdef double sh[MAXN]
    cdef double cf[MAXN]
    cdef Py_ssize_t r, k, i, p, s, stride, first, upto
    cdef double v, best
    cdef long long c
    upto = count_upto if count_upto < m else m
    with nogil:
        for r in range(R):
            for i in range(n):
                sc[i] = scale[i, r]
                sh[i] = shift[i, r]
                cf[i] = drift_coef[i, r]
            if j == n:
                for k in range(m):
                    best = sc[0] * X[0, r, k] + sh[0] - cf[0] * drift[0, k]
                    for i in range(1, n):
                        v = sc[i] * X[i, r, k] + sh[i] - cf[i] * drift[i, k]
                        if v < best:
                            best = v
                    row[k] = best
            elif j == 1:
                for k in range(m):
                    best = sc[0] * X[0, r, k] + sh[0] - cf[0] * drift[0, k]
                    for i in range(1, n):
                        v = sc[i] * X[i, r, k] + sh[i] - cf[i] * drift[i, k]
                        if v > best:
                            best = v
                    row[k] = best
            else:
                for k in range(m):
                    for i in range(n):
                        v = sc[i] * X[i, r, k] + sh[i] - cf[i] * drift[i, k]
                        # buf[0..i] stays sorted in descending order
                        p = i
                        while p > 0 and buf[p - 1] < v:
                            buf[p] = buf[p - 1]
                            p -= 1
                        buf[p] = v
                    row[k] = buf[j - 1]
            c = 0
            for k in range(upto):
                if row[k] > level:
                    c += 1
            counts[r] = c
            for s in range(S):
                stride = strides[s]
                first = (stride - (start + offset) % stride) % stride + start
                best = -INFINITY
                k = first
                while k < m:
                    if row[k] > best:
                        best = row[k]
                    k += stride
                maxes[r, s] = best
    return maxes_arr, counts_arr
