# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the regression and partition hot loops.

Every reduction runs sequentially over paths so the result does not depend
on how many threads the surrounding process uses.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def gram(const double[:, ::1] X, const double[:, ::1] V):
    """Return ``(X.T @ X, X.T @ V)`` accumulated row by row."""
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], k = V.shape[1]
    cdef Py_ssize_t r, i, j
    cdef double xi
    if V.shape[0] != n:
        raise ValueError("X and V must have the same number of rows")
    G_arr = np.zeros((p, p), dtype=np.float64)
    R_arr = np.zeros((p, k), dtype=np.float64)
    cdef double[:, ::1] G = G_arr
    cdef double[:, ::1] R = R_arr
    with nogil:
        for r in range(n):
            for i in range(p):
                xi = X[r, i]
                for j in range(i, p):
                    G[i, j] += xi * X[r, j]
                for j in range(k):
                    R[i, j] += xi * V[r, j]
        for i in range(p):
            for j in range(i):
                G[i, j] = G[j, i]
    return G_arr, R_arr


def apply_coefficients(const double[:, ::1] X, const double[:, ::1] beta):
    """Return ``X @ beta`` with a fixed left-to-right inner sum."""
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], k = beta.shape[1]
    cdef Py_ssize_t r, i, j
    cdef double acc
    if beta.shape[0] != p:
        raise ValueError("beta has the wrong number of rows")
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for r in range(n):
            for j in range(k):
                acc = 0.0
                for i in range(p):
                    acc = acc + X[r, i] * beta[i, j]
                out[r, j] = acc
    return out_arr


def backward_running_min(const double[::1] a):
    """``out[j] = min(a[j:])``."""
    cdef Py_ssize_t n = a.shape[0], j
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double cur
    if n == 0:
        return out_arr
    with nogil:
        cur = a[n - 1]
        out[n - 1] = cur
        for j in range(n - 2, -1, -1):
            if a[j] < cur:
                cur = a[j]
            out[j] = cur
    return out_arr
