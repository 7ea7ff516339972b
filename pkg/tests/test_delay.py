import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absde_lab.delay import (
    DelayDomainError,
    DelayFunction,
    DelayNotPositiveError,
    compute_partition,
    estimate_a2_constant,
    probe_ratio,
    validate_a1,
)


def affine_recursion(a, b, T):
    # t_i solves t + a + b t = t_{i-1}
    pts = [T]
    while pts[-1] > 0:
        nxt = (pts[-1] - a) / (1 + b)
        pts.append(max(nxt, 0.0))
    return pts


def test_constant_partition_exact():
    d = DelayFunction.constant(0.3, 1.0, 0.3)
    p = compute_partition(d, d, 1.0, 1e-4)
    assert p.N == 4
    np.testing.assert_allclose(p.points, [1, 0.7, 0.4, 0.1, 0], atol=1e-4)


def test_affine_partition_matches_recursion():
    d = DelayFunction.affine(0.1, 0.5, 1.0, 0.6)
    p = compute_partition(d, d, 1.0, 1e-4)
    ref = affine_recursion(0.1, 0.5, 1.0)
    assert len(p.points) == len(ref) == 6
    np.testing.assert_allclose(p.points, ref, atol=1e-3)


def test_delay_beyond_horizon_gives_one_segment():
    d = DelayFunction.constant(1.2, 1.0, 1.2)
    assert compute_partition(d, d, 1.0, 1e-4).points == (1.0, 0.0)


def test_two_delays_use_the_smaller():
    d1 = DelayFunction.constant(0.3, 1.0, 0.5)
    d2 = DelayFunction.constant(0.5, 1.0, 0.5)
    assert compute_partition(d1, d2, 1.0, 1e-4).points == compute_partition(d1, d1, 1.0, 1e-4).points


def test_partition_runtime():
    d = DelayFunction.affine(0.1, 0.5, 1.0, 0.6)
    start = time.perf_counter()
    compute_partition(d, d, 1.0, 1e-4)
    assert time.perf_counter() - start < 1.0


def test_zero_delay_rejected():
    d = DelayFunction.tabulated([0, 0.5, 1], [0.2, 0.0, 0.2], 1.0, 0.2)
    with pytest.raises(DelayNotPositiveError):
        compute_partition(d, d, 1.0, 1e-3)


def test_domain_must_cover_horizon():
    d = DelayFunction.tabulated([0, 0.5], [0.2, 0.2], 1.0, 0.2)
    with pytest.raises(DelayDomainError):
        compute_partition(d, d, 1.0, 1e-3)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(0.02, 1.5),
    b=st.floats(0.0, 1.0),
)
def test_partition_segments_look_into_solved_region(a, b):
    T, res = 1.0, 1e-3
    d = DelayFunction.affine(a, b, T, a + b * T)
    p = compute_partition(d, d, T, res)
    pts = np.asarray(p.points)
    assert pts[0] == T and pts[-1] == 0.0
    assert np.all(np.diff(pts) < 0)
    assert p.N <= math.ceil(T / a) + 1
    for lo, hi in p.segments():
        s = np.linspace(lo, hi, 101)
        assert np.all(s + d(s) >= hi - res - 1e-9)


def test_a1_validation():
    assert validate_a1(DelayFunction.constant(0.5, 1.0, 0.5), 1.0, 0.5)
    assert not validate_a1(DelayFunction.constant(0.6, 1.0, 0.5), 1.0, 0.5)
    assert not validate_a1(DelayFunction.tabulated([0, 1], [0.0, 0.2], 1.0, 0.2), 1.0, 0.2)


def test_probe_ratio_constant_delay_is_shift():
    d = DelayFunction.constant(0.5, 1.0, 0.5)
    # g = 1 on [0, 1.5]: numerator 1, denominator 1.5
    assert probe_ratio(d, lambda s: np.ones_like(s), 1.0, 0.5) == pytest.approx(2 / 3, abs=1e-9)


def test_a2_estimate_constant_delay_bounded_by_one():
    est = estimate_a2_constant(DelayFunction.constant(0.5, 1.0, 0.5), 1.0, 0.5, probes=100)
    # trapezoid error on step functions is O(grid spacing)
    assert 0 < est.value <= 1.0 + 1e-3
    assert est.probes_used == 100
    assert not est.unbounded_warning
    assert np.all(np.diff(est.history) >= 0)


def test_a2_requires_a1():
    with pytest.raises(ValueError):
        estimate_a2_constant(DelayFunction.constant(0.6, 1.0, 0.5), 1.0, 0.5)
