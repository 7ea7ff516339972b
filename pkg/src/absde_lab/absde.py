"""Anticipated BSDE solver: partition chain, global Picard oracle, terminal builder."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bsde import ConvergenceError, NumericalError, SegmentProblem, solve_euler
from .delay import compute_partition
from .dsl import GeneratorEvaluationError, evaluate_ce_bodies
from .engine import RegressionCache

log = logging.getLogger(__name__)


class AnticipationLookupError(RuntimeError):
    """The anticipated time points outside the available data."""


@dataclass
class AbsdeProblem:
    """Generator, delay and terminal data on [T, T+K].

    ``xi`` has shape ``[paths, n_pad + 1, m]`` on the pad grid. ``eta``
    (terminal Z) is stored and ignored; ``zeta`` (delay of an anticipated Z
    term) is rejected by the solvers.
    """

    generator: object
    delta: object
    xi: np.ndarray
    eta: np.ndarray | None = None
    zeta: object = None

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=np.float64)
        if self.xi.ndim == 2:
            self.xi = self.xi[:, :, None]
        if self.xi.shape[2] != self.generator.m:
            raise ValueError("xi dimension does not match generator m")


@dataclass
class AbsdeSolution:
    Y: np.ndarray  # [paths, n_steps + 1, m] on [0, T + K]
    Z: np.ndarray  # [paths, n_main + 1, m, d] on [0, T]
    partition_used: object = None
    diagnostics: list = field(default_factory=list)
    iterations: int = 0
    history: list = field(default_factory=list)


def _check_problem(problem, ensemble):
    g = ensemble.grid
    if problem.zeta is not None:
        raise NotImplementedError("generators with an anticipated Z term are not supported")
    if problem.eta is not None:
        log.info("terminal Z process eta supplied; it is not used by the solver")
    if problem.xi.shape[:2] != (ensemble.n_paths, g.n_pad + 1):
        raise ValueError(
            f"xi must have shape ({ensemble.n_paths}, {g.n_pad + 1}, m), got {problem.xi.shape}"
        )


def anticipation_positions(delta, grid, start, end):
    """Fractional grid positions of ``t_n + delta(t_n)`` for ``n = start .. end-1``."""
    t = grid.times[start:end]
    pos = (t + delta(t)) / grid.h
    near = np.round(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    if np.any(pos > grid.n_steps):
        bad = int(start + np.argmax(pos > grid.n_steps))
        raise AnticipationLookupError(
            f"t + delta(t) exceeds T + K at grid index {bad}: (a1) violated at run time"
        )
    return pos


def freeze_inputs(problem, Yfull, start, end, cache, known_from=None):
    """Anticipated values ``theta`` and regressed CE nodes on steps ``start .. end-1``.

    ``theta_s`` interpolates ``Y`` linearly between the grid points around
    ``s + delta(s)``. With ``known_from`` set, every lookup must stay at or
    beyond that index.
    """
    g = cache.ensemble.grid
    pos = anticipation_positions(problem.delta, g, start, end)
    lo = np.floor(pos).astype(int)
    w = pos - lo
    if known_from is not None and np.any(lo < known_from):
        bad = int(start + np.argmax(lo < known_from))
        raise AnticipationLookupError(
            f"anticipated value at grid index {bad} points before the solved region"
        )
    hi = np.minimum(lo + 1, g.n_steps)
    theta = (1.0 - w)[None, :, None] * Yfull[:, lo] + w[None, :, None] * Yfull[:, hi]
    expr = problem.generator
    ce = None
    if expr.n_ce:
        ce = np.empty(theta.shape[:2] + (expr.n_ce,))
        for k in range(end - start):
            n = start + k
            try:
                body = evaluate_ce_bodies(expr, g.time(n), theta[:, k])
            except GeneratorEvaluationError as exc:
                raise NumericalError(f"CE body failed at grid index {n}: {exc}") from exc
            ce[:, k] = cache.project(body, n)
    return theta, ce


def _full_Y(problem, ensemble):
    g = ensemble.grid
    Y = np.zeros((ensemble.n_paths, g.n_steps + 1, problem.generator.m))
    Y[:, g.n_main :] = problem.xi
    return Y


def snapped_indices(partition, grid):
    """Partition points snapped down to solver grid indices (duplicates merged)."""
    idx = []
    for t in partition.points:
        i = int(math.floor(t / grid.h + 1e-9))
        if not idx or i < idx[-1]:
            idx.append(i)
    if idx[-1] != 0:
        idx.append(0)
    return idx


def solve_segmented(problem, ensemble, resolution=None, degree=3, cache=None, inner_sweeps=0):
    """Solve segment by segment, latest first, each as a standard BSDE.

    On ``[t_i, t_{i-1}]`` the anticipated values only read the solution at or
    after ``t_{i-1}``, which is already known, so they are frozen and the
    segment is an ordinary BSDE with terminal value ``Y_{t_{i-1}}``.
    """
    _check_problem(problem, ensemble)
    g = ensemble.grid
    cache = cache or RegressionCache(ensemble, degree)
    resolution = resolution or g.h
    partition = compute_partition(problem.delta, problem.delta, g.T, resolution)
    idx = snapped_indices(partition, g)
    Y = _full_Y(problem, ensemble)
    Z = np.zeros((ensemble.n_paths, g.n_main + 1, problem.generator.m, ensemble.d))
    diagnostics = []
    for a, b in zip(idx[1:], idx[:-1]):
        theta, ce = freeze_inputs(problem, Y, a, b, cache, known_from=b)
        seg = SegmentProblem(problem.generator, Y[:, b], a, b, theta, ce)
        sol = solve_euler(seg, ensemble, cache, inner_sweeps=inner_sweeps)
        Y[:, a : b + 1] = sol.Y
        Z[:, a:b] = sol.Z[:, :-1]
        if b == g.n_main:
            Z[:, b] = sol.Z[:, -1]
        diagnostics.append(
            {"segment": (g.time(a), g.time(b)), "steps": b - a, "max_abs_Y": float(np.max(np.abs(sol.Y)))}
        )
    return AbsdeSolution(Y, Z, partition, diagnostics, iterations=1)


def solve_picard_global(problem, ensemble, max_iters=100, tol=1e-10, degree=3, cache=None):
    """Fixed-point iteration over all of [0, T] (independent of the partition).

    Starts from ``Y_t = CE[xi_T | F_t]`` on [0, T]; each iterate reads the
    anticipated values from the previous one and runs one backward Euler pass.
    """
    _check_problem(problem, ensemble)
    g = ensemble.grid
    cache = cache or RegressionCache(ensemble, degree)
    Y = _full_Y(problem, ensemble)
    for k in range(g.n_main - 1, -1, -1):
        Y[:, k] = cache.project(Y[:, k + 1], k)
    history = []
    for it in range(1, max_iters + 1):
        theta, ce = freeze_inputs(problem, Y, 0, g.n_main, cache)
        seg = SegmentProblem(problem.generator, Y[:, g.n_main], 0, g.n_main, theta, ce)
        sol = solve_euler(seg, ensemble, cache)
        change = float(np.max(np.abs(sol.Y - Y[:, : g.n_main + 1])))
        history.append(change)
        Y[:, : g.n_main + 1] = sol.Y
        if change <= tol:
            return AbsdeSolution(Y, sol.Z, None, [], it, history)
    raise ConvergenceError(
        f"global Picard iteration did not converge in {max_iters} iterations", history
    )


class DegenerateIntervalError(ValueError):
    pass


def build_interpolated_terminal(xi_tau, xi_right, tau, t_right, ensemble, cache=None, degree=3):
    """Linear blend of ``xi_tau`` into ``CE[xi_right | F_t]`` across ``[tau, t_right]``.

    Returns ``[paths, steps + 1, m]`` on the grid points of the interval.
    Ordered inputs give ordered outputs because the blend weights are
    nonnegative and CE is monotone up to regression error.
    """
    g = ensemble.grid
    i0, i1 = g.index(tau), g.index(t_right)
    if not i0 < i1:
        raise DegenerateIntervalError("need tau < t_right strictly")
    cache = cache or RegressionCache(ensemble, degree)
    xi_tau = np.asarray(xi_tau, dtype=np.float64).reshape(ensemble.n_paths, -1)
    xi_right = np.asarray(xi_right, dtype=np.float64).reshape(ensemble.n_paths, -1)
    out = np.empty((ensemble.n_paths, i1 - i0 + 1, xi_tau.shape[1]))
    span = g.time(i1) - g.time(i0)
    for j in range(i0, i1 + 1):
        w = (g.time(i1) - g.time(j)) / span
        out[:, j - i0] = w * xi_tau + (1.0 - w) * cache.project(xi_right, j)
    out[:, 0] = xi_tau
    return out
