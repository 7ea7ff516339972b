"""Pure-numpy fallback for the compiled kernels in ``_core.pyx``.

``np.einsum`` without ``optimize`` never dispatches to BLAS, so these
reductions are as reproducible as the compiled ones (their rounding differs
from the compiled kernels only in the last bits).
"""
import numpy as np


def gram(X, V):
    X = np.ascontiguousarray(X, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    if V.shape[0] != X.shape[0]:
        raise ValueError("X and V must have the same number of rows")
    return np.einsum("ni,nj->ij", X, X), np.einsum("ni,nk->ik", X, V)


def apply_coefficients(X, beta):
    X = np.ascontiguousarray(X, dtype=np.float64)
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    if beta.shape[0] != X.shape[1]:
        raise ValueError("beta has the wrong number of rows")
    out = np.zeros((X.shape[0], beta.shape[1]))
    for i in range(X.shape[1]):
        out += X[:, i : i + 1] * beta[i]
    return out


def backward_running_min(a):
    a = np.asarray(a, dtype=np.float64)
    return np.minimum.accumulate(a[::-1])[::-1].copy()
