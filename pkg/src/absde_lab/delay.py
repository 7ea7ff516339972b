"""Delay functions, the (a1)/(a2) conditions and the segment partition."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

# Absolute slack used when comparing times that were produced by arithmetic on
# grid multiples (0.7 + 0.3 is not exactly 1.0).
TIME_EPS = 1e-9


class DelayDomainError(ValueError):
    """The delay is not defined on all of [0, T]."""


class DelayNotPositiveError(ValueError):
    """Partition iteration failed to terminate: the delay vanishes at grid scale."""


@dataclass(frozen=True)
class DelayFunction:
    """A continuous, strictly positive delay on [0, domain_end].

    ``kind`` is one of ``constant`` (``params = (c,)``), ``affine``
    (``params = (a, b)`` for ``a + b*t``) or ``tabulated`` (``params`` holds
    the sample values at ``times``, interpolated piecewise linearly).
    """

    kind: str
    params: tuple
    domain_end: float
    horizon_pad: float = 0.0
    times: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "tabulated"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.kind == "constant" and len(self.params) != 1:
            raise ValueError("constant delay takes one parameter")
        if self.kind == "affine" and len(self.params) != 2:
            raise ValueError("affine delay takes two parameters (a, b)")
        if self.kind == "tabulated":
            if len(self.times) != len(self.params) or len(self.times) < 2:
                raise ValueError("tabulated delay needs matching times/values, at least two")
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("tabulated times must increase strictly")

    @classmethod
    def constant(cls, c, T, K=0.0):
        return cls("constant", (float(c),), float(T), float(K))

    @classmethod
    def affine(cls, a, b, T, K=0.0):
        return cls("affine", (float(a), float(b)), float(T), float(K))

    @classmethod
    def tabulated(cls, times, values, T, K=0.0):
        return cls(
            "tabulated",
            tuple(float(v) for v in values),
            float(T),
            float(K),
            tuple(float(t) for t in times),
        )

    @property
    def defined_on(self):
        if self.kind == "tabulated":
            return self.times[0], self.times[-1]
        return 0.0, self.domain_end

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "constant":
            return np.full_like(t, self.params[0])
        if self.kind == "affine":
            a, b = self.params
            return a + b * t
        return np.interp(t, self.times, self.params)

    def describe(self):
        if self.kind == "constant":
            return f"constant c={self.params[0]:g}"
        if self.kind == "affine":
            return f"affine {self.params[0]:g} + {self.params[1]:g}*t"
        return f"tabulated ({len(self.times)} points)"


def _check_domain(delay, T):
    lo, hi = delay.defined_on
    if lo > TIME_EPS or hi < T - TIME_EPS:
        raise DelayDomainError(
            f"delay defined on [{lo:g}, {hi:g}] does not cover [0, {T:g}]"
        )


def _grid(T, resolution):
    n = int(round(T / resolution))
    if n < 1 or abs(n * resolution - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"resolution {resolution!r} does not divide T={T!r}")
    return np.arange(n + 1) * resolution, n


def validate_a1(delay, T, K, n_eval=10_001):
    """True iff ``delta(t) > 0`` and ``t + delta(t) <= T + K`` on an evaluation grid."""
    if T <= 0 or K < 0:
        raise ValueError("need T > 0 and K >= 0")
    _check_domain(delay, T)
    t = np.linspace(0.0, T, n_eval)
    if delay.kind == "tabulated":
        t = np.union1d(t, np.clip(delay.times, 0.0, T))
    d = delay(t)
    return bool(np.all(d > 0) and np.all(t + d <= T + K + TIME_EPS))


@dataclass
class A2Estimate:
    value: float
    probes_used: int
    unbounded_warning: bool
    history: np.ndarray

    def __float__(self):
        return self.value


def _step_function(rng, lo, hi):
    n = int(rng.integers(1, 21))
    edges = np.sort(rng.uniform(lo, hi, size=n - 1))
    heights = rng.uniform(0.0, 1.0, size=n)
    heights[rng.random(n) < 0.3] = 0.0
    return edges, heights


def _eval_step(edges, heights, s):
    return heights[np.searchsorted(edges, s, side="right")]


def probe_ratio(delay, g, T, K, n_grid=20_001):
    """``int_0^T g(s + delta(s)) ds / int_0^{T+K} g(s) ds`` by the trapezoid rule.

    ``g`` is any vectorised nonnegative function.
    """
    s_main = np.linspace(0.0, T, n_grid)
    n_full = max(2, int(round(n_grid * (T + K) / T)))
    s_full = np.linspace(0.0, T + K, n_full)
    num = np.trapezoid(g(s_main + delay(s_main)), s_main)
    den = np.trapezoid(g(s_full), s_full)
    if den <= 0:
        return math.nan
    return float(num / den)


def estimate_a2_constant(delay, T, K, probes=200, seed=0, n_grid=4001):
    """Empirical lower bound on the (a2) constant M.

    Samples random nonnegative step functions; probes with a vanishing
    denominator are discarded and redrawn. The estimate is only ever a lower
    bound: no finite probe set certifies (a2).
    """
    if not validate_a1(delay, T, K):
        raise ValueError("delay fails (a1); (a2) is not meaningful")
    rng = np.random.default_rng(seed)
    ratios = []
    attempts = 0
    while len(ratios) < probes:
        attempts += 1
        if attempts > 50 * probes:
            raise RuntimeError("could not draw non-degenerate probes")
        edges, heights = _step_function(rng, 0.0, T + K)
        r = probe_ratio(delay, lambda s: _eval_step(edges, heights, s), T, K, n_grid)
        if not math.isfinite(r):
            continue
        ratios.append(r)
    hist = np.maximum.accumulate(np.asarray(ratios))
    half = hist[len(hist) // 2 - 1] if len(hist) >= 2 else hist[0]
    warn = bool(hist[-1] > 1.5 * half and hist[-1] > 0)
    return A2Estimate(float(hist[-1]), len(ratios), warn, hist)


@dataclass(frozen=True)
class Partition:
    """Decreasing times ``T = t_0 > t_1 > ... > t_N = 0``."""

    points: tuple
    resolution: float

    @property
    def N(self):
        return len(self.points) - 1

    def segments(self):
        """Pairs ``(t_i, t_{i-1})`` for i = 1..N, latest segment first."""
        return [(self.points[i], self.points[i - 1]) for i in range(1, len(self.points))]


def compute_partition(delta1, delta2, T, resolution):
    """Grid version of the iteration ``t_i = min{t : min_j(s + delta_j(s)) >= t_{i-1} on [t, T]}``.

    ``phi(t) = min_{s in [t, T]} min_j (s + delta_j(s))`` is nondecreasing,
    so each ``t_i`` is a binary search on it. Returned points lie on the grid.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    for d in (delta1, delta2):
        _check_domain(d, T)
    s, n = _grid(T, resolution)
    psi = np.minimum(s + delta1(s), s + delta2(s))
    phi = kernels.backward_running_min(np.ascontiguousarray(psi))

    min_delay = float(min(delta1(s).min(), delta2(s).min()))
    if min_delay <= resolution * 1e-6:
        raise DelayNotPositiveError("delay not strictly positive at grid scale")
    cap = int(math.ceil(T / min_delay)) + 2

    idx = [n]
    while idx[-1] > 0:
        if len(idx) > cap:
            raise DelayNotPositiveError("delay not strictly positive at grid scale")
        target = s[idx[-1]] - TIME_EPS
        j = int(np.searchsorted(phi, target, side="left"))
        if j >= idx[-1]:
            raise DelayNotPositiveError("delay not strictly positive at grid scale")
        idx.append(j)
    points = tuple(float(round(i * resolution, 12)) for i in idx)
    return Partition(points, float(resolution))
