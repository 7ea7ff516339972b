import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absde_lab.engine import (
    MemoryBudgetError,
    PathEnsemble,
    RegressionCache,
    TimeGrid,
    conditional_expectation,
    design_matrix,
    monomial_exponents,
    path_increments,
    simulate,
)

GRID = TimeGrid.from_horizon(1.0, 0.5, 0.05)


def test_grid_layout():
    assert GRID.n_main == 20 and GRID.n_pad == 10 and GRID.n_steps == 30
    assert GRID.index(1.0) == 20
    with pytest.raises(ValueError):
        GRID.index(0.333)
    with pytest.raises(ValueError):
        TimeGrid.from_horizon(1.0, 0.5, 0.3)


def test_same_seed_same_ensemble():
    a = simulate(5, 300, GRID, d=2)
    b = simulate(5, 300, GRID, d=2)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, simulate(6, 300, GRID, d=2).increments)


def test_thread_count_does_not_change_paths():
    a = simulate(5, 1000, GRID, workers=1)
    b = simulate(5, 1000, GRID, workers=4)
    assert np.array_equal(a.increments, b.increments)


def test_single_path_regeneration():
    ens = simulate(11, 600, GRID, d=2)
    for p in (0, 257, 599):
        assert np.array_equal(path_increments(11, p, GRID, 2), ens.increments[p])


def test_prefix_stable_in_path_count():
    small, big = simulate(3, 100, GRID), simulate(3, 700, GRID)
    assert np.array_equal(small.increments, big.increments[:100])


def test_ensemble_is_read_only():
    ens = simulate(1, 10, GRID)
    with pytest.raises(ValueError):
        ens.increments[0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        ens.B[0, 0, 0] = 1.0


def test_dump_load_roundtrip(tmp_path):
    ens = simulate(9, 50, GRID, d=2)
    f = tmp_path / "ens.bin"
    ens.dump(f)
    back = PathEnsemble.load(f)
    assert back.seed == 9 and back.grid == GRID
    assert np.array_equal(back.increments, ens.increments)
    raw = f.read_bytes()
    assert raw[:8] == b"ABSDEPE1"
    f.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        PathEnsemble.load(f)


def test_memory_cap():
    with pytest.raises(MemoryBudgetError):
        simulate(1, 10_000, GRID, memory_cap=1000)


def test_brownian_moments(ensemble_1d):
    B = ensemble_1d.B[:, :, 0]
    n = B.shape[0]
    assert np.all(B[:, 0] == 0)
    for i in (10, 50, 100, 150):
        t = ensemble_1d.grid.time(i)
        # mean 0 and variance t within 5 standard errors
        assert abs(B[:, i].mean()) <= 5 * math.sqrt(t / n)
        assert abs(B[:, i].var(ddof=1) - t) <= 5 * t * math.sqrt(2 / (n - 1))


def test_increments_uncorrelated(ensemble_1d):
    inc = ensemble_1d.increments[:, :, 0]
    c = np.corrcoef(inc[:, 3], inc[:, 4])[0, 1]
    assert abs(c) <= 5 / math.sqrt(inc.shape[0])


def test_monomials():
    assert monomial_exponents(1, 3) == [(0,), (1,), (2,), (3,)]
    assert len(monomial_exponents(2, 3)) == 10
    X = design_matrix(np.array([[2.0, 3.0]]), 2)
    assert X.tolist() == [[1, 2, 3, 4, 6, 9]]


def test_index_zero_is_sample_mean(small_ensemble):
    v = np.arange(small_ensemble.n_paths, dtype=float)
    out = conditional_expectation(v, 0, 3, small_ensemble)
    assert np.allclose(out, v.mean(), rtol=0, atol=1e-9)


def test_projection_reproduces_polynomials(small_ensemble):
    x = small_ensemble.B[:, 10, 0]
    v = 1 + 2 * x - 0.5 * x**3
    np.testing.assert_allclose(conditional_expectation(v, 10, 3, small_ensemble), v, atol=1e-6)


def test_projection_keeps_constants_and_mean(small_ensemble):
    c = np.full(small_ensemble.n_paths, 2.5)
    np.testing.assert_allclose(conditional_expectation(c, 7, 3, small_ensemble), c, rtol=0, atol=1e-12)
    v = np.sin(small_ensemble.B[:, 20, 0]) ** 2
    out = conditional_expectation(v, 7, 3, small_ensemble)
    assert out.mean() == pytest.approx(v.mean(), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), idx=st.integers(1, 30))
def test_projection_linear_and_idempotent(small_ensemble, a, b, idx):
    cache = RegressionCache(small_ensemble, 3)
    u = small_ensemble.B[:, -1, 0] ** 2
    w = np.cos(small_ensemble.B[:, -1, 0])
    lin = cache.project(a * u + b * w, idx)
    np.testing.assert_allclose(lin, a * cache.project(u, idx) + b * cache.project(w, idx), atol=1e-8)
    once = cache.project(u, idx)
    np.testing.assert_allclose(cache.project(once, idx), once, atol=1e-8)


def test_known_conditional_expectation(ensemble_1d, cache_1d):
    # E[B_T^2 | F_t] = B_t^2 + (T - t)
    BT = ensemble_1d.B[:, 100, 0]
    Bt = ensemble_1d.B[:, 50, 0]
    est = cache_1d.project(BT**2, 50)
    # sampling error of four regression coefficients at 10^4 paths
    assert np.mean(np.abs(est - (Bt**2 + 0.5))) < 0.06


def test_tower_property_approximately(ensemble_1d, cache_1d):
    v = np.exp(ensemble_1d.B[:, 100, 0] / 2)
    direct = cache_1d.project(v, 30)
    nested = cache_1d.project(cache_1d.project(v, 70), 30)
    assert np.mean(np.abs(direct - nested)) < 0.01


def test_rank_deficient_degree_reduced(caplog):
    ens = simulate(2, 3, TimeGrid.from_horizon(1.0, 0.0, 0.5))
    out = conditional_expectation(np.array([1.0, 2.0, 4.0]), 1, 5, ens)
    assert np.all(np.isfinite(out))
    assert "rank-deficient" in caplog.text


def test_thread_cap_from_environment(monkeypatch):
    from absde_lab.engine import worker_count

    monkeypatch.setenv("ABSDE_LAB_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ABSDE_LAB_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.delenv("ABSDE_LAB_THREADS")
    assert 1 <= worker_count() <= 8
