"""Seeded Brownian ensembles and least-squares conditional expectations."""
from __future__ import annotations

import itertools
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import kernels

log = logging.getLogger(__name__)

DEFAULT_MEMORY_CAP = 1 << 30  # bytes
DUMP_MAGIC = b"ABSDEPE1"
_HEADER = struct.Struct("<8sQQQdQQ")


class MemoryBudgetError(MemoryError):
    pass


def worker_count():
    """Thread cap from ``ABSDE_LAB_THREADS`` (default: CPU count, at most 8)."""
    raw = os.environ.get("ABSDE_LAB_THREADS")
    if raw:
        return max(1, int(raw))
    return max(1, min(8, os.cpu_count() or 1))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T + K] with ``n_main`` steps on [0, T]."""

    h: float
    n_main: int
    n_pad: int

    @classmethod
    def from_horizon(cls, T, K, h):
        if h <= 0:
            raise ValueError("step must be positive")
        n_main = int(round(T / h))
        n_pad = int(round(K / h))
        if n_main < 1 or abs(n_main * h - T) > 1e-12 * max(1.0, T) + 1e-12:
            raise ValueError(f"step {h!r} does not divide T={T!r}")
        if abs(n_pad * h - K) > 1e-12 * max(1.0, K) + 1e-12:
            raise ValueError(f"step {h!r} does not divide K={K!r}")
        return cls(float(h), n_main, n_pad)

    @property
    def T(self):
        return self.n_main * self.h

    @property
    def K(self):
        return self.n_pad * self.h

    @property
    def n_steps(self):
        return self.n_main + self.n_pad

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.h

    def time(self, index):
        return index * self.h

    def index(self, t):
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        x = t / self.h
        i = int(round(x))
        if abs(x - i) > 1e-9 or not 0 <= i <= self.n_steps:
            raise ValueError(f"time {t!r} is not on the grid")
        return i


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Brownian increments ``[n_paths, n_steps, d]``, each N(0, h)."""

    seed: int
    grid: TimeGrid
    increments: np.ndarray
    _B: list = field(default_factory=list, repr=False)

    @property
    def n_paths(self):
        return self.increments.shape[0]

    @property
    def d(self):
        return self.increments.shape[2]

    @property
    def B(self):
        """Cumulative Brownian values ``[n_paths, n_steps + 1, d]`` with ``B_0 = 0``."""
        if not self._B:
            B = np.zeros((self.n_paths, self.grid.n_steps + 1, self.d))
            np.cumsum(self.increments, axis=1, out=B[:, 1:])
            B.flags.writeable = False
            self._B.append(B)
        return self._B[0]

    def dump(self, path):
        """Write header + little-endian float64 payload, path-major."""
        g = self.grid
        header = _HEADER.pack(
            DUMP_MAGIC, self.seed & (2**64 - 1), self.n_paths, self.d, g.h, g.n_main, g.n_pad
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, seed, n_paths, d, h, n_main, n_pad = _HEADER.unpack_from(raw)
        if magic != DUMP_MAGIC:
            raise ValueError("not an ensemble dump")
        grid = TimeGrid(h, n_main, n_pad)
        data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        expected = n_paths * grid.n_steps * d
        if data.size != expected:
            raise ValueError(f"payload has {data.size} values, expected {expected}")
        inc = data.reshape(n_paths, grid.n_steps, d).astype(np.float64)
        inc.flags.writeable = False
        return cls(int(seed), grid, inc)


def _path_normals(seed, path, count):
    # One Philox stream per path: the path index sits in the high counter word,
    # so path i can be regenerated without touching the others.
    bitgen = np.random.Philox(key=seed & (2**64 - 1), counter=[0, 0, 0, path])
    u = np.random.Generator(bitgen).random(count)
    return ndtri(u + 2.0**-54)


def path_increments(seed, path, grid, d):
    """Increments of a single path, identical to row ``path`` of :func:`simulate`."""
    z = _path_normals(seed, path, grid.n_steps * d)
    return (z * math.sqrt(grid.h)).reshape(grid.n_steps, d)


def simulate(seed, n_paths, grid, d=1, memory_cap=DEFAULT_MEMORY_CAP, workers=None):
    """Generate an immutable ensemble of independent Brownian increments.

    The result depends only on ``(seed, n_paths, grid, d)``; threads fill
    disjoint rows from per-path streams.
    """
    if n_paths < 2:
        raise ValueError("need at least two paths")
    if d < 1:
        raise ValueError("Brownian dimension must be >= 1")
    need = n_paths * (grid.n_steps + 1) * d * 8 * 2  # increments + cumulative
    if need > memory_cap:
        raise MemoryBudgetError(
            f"ensemble needs {need} bytes, cap is {memory_cap} bytes"
        )
    inc = np.empty((n_paths, grid.n_steps, d))
    sq = math.sqrt(grid.h)
    count = grid.n_steps * d

    def fill(rows):
        for p in rows:
            inc[p] = (_path_normals(seed, p, count) * sq).reshape(grid.n_steps, d)

    workers = workers or worker_count()
    chunks = [range(i, min(i + 256, n_paths)) for i in range(0, n_paths, 256)]
    if workers == 1 or len(chunks) == 1:
        for c in chunks:
            fill(c)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(fill, chunks))
    inc.flags.writeable = False
    return PathEnsemble(int(seed), grid, inc)


def monomial_exponents(d, degree):
    """Exponent tuples of all monomials in ``d`` variables with total degree <= degree."""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), total):
            e = [0] * d
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return out


def design_matrix(x, degree):
    """Polynomial features of the rows of ``x`` (shape ``[n, d]``), constant first."""
    n, d = x.shape
    cols = []
    for e in monomial_exponents(d, degree):
        c = np.ones(n)
        for j, k in enumerate(e):
            if k:
                c = c * x[:, j] ** k
        cols.append(c)
    return np.ascontiguousarray(np.stack(cols, axis=1))


class Projector:
    """Least-squares projection onto polynomials of ``B_t`` at one grid index.

    The regressor is ``B_t / sqrt(t)`` (same span, better conditioned). The
    ridge term damps every coefficient except the intercept, so constants are
    reproduced and the projection keeps the sample mean.
    """

    def __init__(self, ensemble, index, degree, ridge=1e-8, cond_limit=1e12):
        self.index = index
        self.n = ensemble.n_paths
        if index == 0 or degree == 0:
            self.degree = 0
            self.X = None
            return
        t = ensemble.grid.time(index)
        x = ensemble.B[:, index, :] / math.sqrt(t)
        deg = degree
        while True:
            X = design_matrix(x, deg)
            G, _ = kernels.gram(X, np.zeros((self.n, 0)))
            G /= self.n
            ev = np.linalg.eigvalsh(G)
            if deg == 0 or (ev[0] > 0 and ev[-1] / ev[0] < cond_limit):
                break
            log.warning(
                "rank-deficient regression at index %d with degree %d; reducing degree",
                index,
                deg,
            )
            deg -= 1
        self.degree = deg
        if deg == 0:
            self.X = None
            return
        self.X = X
        A = G.copy()
        A[np.arange(1, A.shape[0]), np.arange(1, A.shape[0])] += ridge
        self._A = A

    def coefficients(self, values):
        V = np.ascontiguousarray(values.reshape(self.n, -1), dtype=np.float64)
        _, R = kernels.gram(self.X, V)
        return np.linalg.solve(self._A, R / self.n)

    def __call__(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.n:
            raise ValueError("values must have one entry per path")
        shape = values.shape
        if self.X is None:
            flat = values.reshape(self.n, -1)
            mean = np.add.reduce(flat, axis=0) / self.n
            return np.broadcast_to(mean, flat.shape).reshape(shape).copy()
        beta = self.coefficients(values)
        return kernels.apply_coefficients(self.X, beta).reshape(shape)


class RegressionCache:
    """Lazily built :class:`Projector` per grid index for one ensemble."""

    def __init__(self, ensemble, degree=3, ridge=1e-8):
        self.ensemble = ensemble
        self.degree = degree
        self.ridge = ridge
        self._proj = {}

    def __getitem__(self, index):
        p = self._proj.get(index)
        if p is None:
            p = Projector(self.ensemble, index, self.degree, self.ridge)
            self._proj[index] = p
        return p

    def project(self, values, index):
        return self[index](values)


def conditional_expectation(values, at_index, basis_degree, ensemble, ridge=1e-8):
    """Regression estimate of ``E[values | F_t]`` at grid index ``at_index``, per path."""
    if basis_degree < 0:
        raise ValueError("basis_degree must be >= 0")
    return Projector(ensemble, at_index, basis_degree, ridge)(values)
