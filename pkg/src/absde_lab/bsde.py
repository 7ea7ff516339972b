"""Backward Euler scheme for a standard BSDE on one grid segment.

The anticipated term never appears here: the ABSDE solver freezes it into
per-(path, step) exogenous arrays before calling in.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsl import GeneratorEvaluationError, evaluate
from .engine import RegressionCache


class NumericalError(ArithmeticError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = list(history)


@dataclass
class SegmentProblem:
    """BSDE on grid indices ``[start, end]`` with terminal values at ``end``.

    ``theta`` (``[paths, end - start, m]``) and ``ce_values``
    (``[paths, end - start, n_ce]``) hold the frozen anticipated inputs at
    steps ``start .. end-1``; both may be None for anticipation-free
    generators.
    """

    generator: object
    terminal: np.ndarray
    start: int
    end: int
    theta: np.ndarray | None = None
    ce_values: np.ndarray | None = None

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("segment needs start < end")
        self.terminal = np.asarray(self.terminal, dtype=np.float64)
        if self.terminal.ndim == 1:
            self.terminal = self.terminal[:, None]
        n_steps = self.end - self.start
        for name in ("theta", "ce_values"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[1] != n_steps:
                raise ValueError(f"{name} must span exactly the segment ({n_steps} steps)")
        if self.generator.n_ce and self.ce_values is None:
            raise ValueError("generator has CE nodes but no ce_values were supplied")
        if self.generator.uses_theta_outside_ce and self.theta is None:
            raise ValueError("generator reads theta but no theta was supplied")


@dataclass
class BsdeSolution:
    Y: np.ndarray  # [paths, steps + 1, m]
    Z: np.ndarray  # [paths, steps + 1, m, d]
    start: int
    end: int
    residual: float = 0.0
    iterations: int = 0
    history: list = field(default_factory=list)


def _step_inputs(problem, k):
    th = None if problem.theta is None else problem.theta[:, k]
    ce = None if problem.ce_values is None else problem.ce_values[:, k]
    return th, ce


def _regress_step(cache, Y_next, dB, index, h):
    """CE[Y_next | F_n] and CE[Y_next dB^T | F_n] / h.

    The Z regression uses the innovation ``Y_next - CE[Y_next | F_n]``: same
    conditional expectation (dB has conditional mean zero), far less sampling
    noise from the ``B_n dB`` cross term.
    """
    n, m = Y_next.shape
    d = dB.shape[1]
    pred = cache.project(Y_next, index)
    innov = Y_next - pred
    z = cache.project((innov[:, :, None] * dB[:, None, :]).reshape(n, m * d), index)
    return pred, z.reshape(n, m, d) / h


def _f(problem, t, y, z, k):
    th, ce = _step_inputs(problem, k)
    try:
        return evaluate(problem.generator, t, y, z, ce, th)
    except GeneratorEvaluationError as exc:
        raise NumericalError(f"generator failed at step {problem.start + k}: {exc}") from exc


def _check(arr, index):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite solution at grid index {index}")


def solve_euler(problem, ensemble, cache=None, degree=3, inner_sweeps=0):
    """Explicit backward Euler with regression-based conditional expectations.

    For ``n = end-1 .. start``::

        Z_n = CE[Y_{n+1} dB_n^T | F_n] / h
        Y_n = CE[Y_{n+1} | F_n] + h f(t_n, CE[Y_{n+1} | F_n], Z_n, frozen inputs)

    ``inner_sweeps`` re-evaluates ``f`` at the updated ``Y_n`` that many
    times. ``Z`` at ``end`` copies the last computed step.
    """
    cache = cache or RegressionCache(ensemble, degree)
    g = ensemble.grid
    h = g.h
    n_paths = ensemble.n_paths
    m = problem.generator.m
    d = ensemble.d
    if problem.generator.d > d:
        raise ValueError("generator references more Brownian columns than the ensemble has")
    if problem.terminal.shape != (n_paths, m):
        raise ValueError(f"terminal must have shape {(n_paths, m)}")
    L = problem.end - problem.start
    Y = np.empty((n_paths, L + 1, m))
    Z = np.zeros((n_paths, L + 1, m, d))
    Y[:, L] = problem.terminal
    inc = ensemble.increments
    for k in range(L - 1, -1, -1):
        n = problem.start + k
        pred, z = _regress_step(cache, Y[:, k + 1], inc[:, n], n, h)
        t = g.time(n)
        y = pred + h * _f(problem, t, pred, z, k)
        for _ in range(inner_sweeps):
            y = pred + h * _f(problem, t, y, z, k)
        _check(y, n)
        _check(z, n)
        Y[:, k] = y
        Z[:, k] = z
    Z[:, L] = Z[:, L - 1]
    return BsdeSolution(Y, Z, problem.start, problem.end, iterations=1)


def solve_picard(problem, ensemble, max_iters=200, tol=1e-10, cache=None, degree=3, initial=None):
    """Fixed-point iteration on the whole segment.

    Iterate ``k`` evaluates the generator along ``Y^k`` (at its predictor
    ``CE[Y^k_{n+1}]`` and ``Z^k_n``) and rebuilds ``Y^{k+1}`` backward from
    the terminal values. The fixed point is the explicit Euler solution. The
    first iterate is the pure conditional expectation of the terminal values,
    so a zero generator converges in one iteration.
    """
    cache = cache or RegressionCache(ensemble, degree)
    g = ensemble.grid
    h = g.h
    n_paths = ensemble.n_paths
    m = problem.generator.m
    d = ensemble.d
    L = problem.end - problem.start
    inc = ensemble.increments

    def backward(drift):
        Y = np.empty((n_paths, L + 1, m))
        Y[:, L] = problem.terminal
        for k in range(L - 1, -1, -1):
            n = problem.start + k
            Y[:, k] = cache.project(Y[:, k + 1], n)
            if drift is not None:
                Y[:, k] += h * drift[:, k]
        return Y

    def drift_along(Y):
        F = np.empty((n_paths, L, m))
        Z = np.zeros((n_paths, L + 1, m, d))
        for k in range(L - 1, -1, -1):
            n = problem.start + k
            pred, z = _regress_step(cache, Y[:, k + 1], inc[:, n], n, h)
            F[:, k] = _f(problem, g.time(n), pred, z, k)
            Z[:, k] = z
        Z[:, L] = Z[:, L - 1]
        return F, Z

    Y = backward(None) if initial is None else np.array(initial, dtype=np.float64)
    history = []
    for it in range(1, max_iters + 1):
        F, Z = drift_along(Y)
        Y_new = backward(F)
        _check(Y_new, problem.start)
        change = float(np.max(np.abs(Y_new - Y)))
        history.append(change)
        Y = Y_new
        if change <= tol:
            F, Z = drift_along(Y)
            return BsdeSolution(Y, Z, problem.start, problem.end, change, it, history)
    raise ConvergenceError(
        f"Picard iteration did not converge in {max_iters} iterations (last change {history[-1]:.3g})",
        history,
    )
