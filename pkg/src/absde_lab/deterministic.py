"""Fine-step deterministic solver for ABSDEs whose solution is a function of time only.

When the terminal data is deterministic and the generator ignores ``z``, the
ABSDE collapses to the advanced ODE ``Y'(t) = -f(t, Y(t), 0, Y(t + delta(t)))``.
This module integrates it with Heun steps on a fine grid. It shares no code
with the regression solvers and serves as their brute-force oracle.
"""
import math

import numpy as np

from .dsl import evaluate


def solve_chain(generator, delta, xi, T, K, step=1e-4):
    """Return ``(times, Y)`` on ``[0, T + K]`` with ``Y = xi(t)`` on ``[T, T + K]``.

    ``xi`` is a vectorised function of time. Only ``m = 1`` generators are
    supported; CE nodes act on the deterministic anticipated value directly.
    """
    if generator.m != 1:
        raise ValueError("deterministic oracle supports m = 1 only")
    n_main = int(round(T / step))
    n_pad = int(round(K / step))
    times = np.arange(n_main + n_pad + 1) * step
    Y = np.empty_like(times)
    Y[n_main:] = xi(times[n_main:])

    def f(t, y, th):
        return float(evaluate(generator, t, np.array([y]), np.zeros((1, generator.d)), None, np.array([th]))[0])

    def theta(t, solved_from):
        s = t + float(delta(t))
        if s < times[solved_from] - 1e-12:
            raise ValueError("anticipated time falls in the unsolved region; refine step")
        return float(np.interp(s, times, Y))

    for n in range(n_main, 0, -1):
        t1, t0 = times[n], times[n - 1]
        k1 = f(t1, Y[n], theta(t1, n))
        y_pred = Y[n] + step * k1
        k2 = f(t0, y_pred, theta(t0, n))
        Y[n - 1] = Y[n] + 0.5 * step * (k1 + k2)
        if not math.isfinite(Y[n - 1]):
            raise ArithmeticError(f"oracle diverged at t = {t0:g}")
    return times, Y
