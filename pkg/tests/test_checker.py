import math

import numpy as np
import pytest

from absde_lab.checker import (
    FAIL,
    PASS,
    SampleConfig,
    check_1dim,
    check_anticipated_multidim,
    check_dispatch,
    check_hupeng,
    check_monotone_sufficient,
    check_pointwise_dominance,
    check_sandwich,
    check_structural,
    draw_samples,
    reverify,
)
from absde_lab.delay import DelayFunction
from absde_lab.dsl import evaluate, parse

CFG = SampleConfig(n_samples=4000)
HALF = DelayFunction.constant(0.5, 1.0, 0.5)
F1 = parse("CE(theta[1]+2*sin(theta[1])+1)")
F2 = parse("CE(theta[1]+cos(2*theta[1])-2)")
FT = parse("CE(theta[1]+sin(theta[1]))")


def dense_gap(f1, f2, lo=-math.pi, hi=math.pi, n=1201):
    """Minimum of f1(th1) - f2(th2) over ordered pairs th1 >= th2 on a dense grid."""
    th = np.linspace(lo, hi, n)
    a = evaluate(f1, 0.0, theta=th[:, None])[:, 0]
    b = evaluate(f2, 0.0, theta=th[:, None])[:, 0]
    # for each th1 the worst th2 <= th1 maximises f2
    return float(np.min(a - np.maximum.accumulate(b)))


def test_samples_cover_box_and_adversarial_regimes():
    S = draw_samples(CFG, 2, 2)
    assert len(S) == CFG.n_samples
    assert np.all(S.th1 >= S.th2)
    assert np.all((S.y >= -3) & (S.y <= 3))
    small = np.abs(S.y[S.y < 0])
    assert small.min() < 1e-6
    assert np.any(np.all(S.z == S.zp, axis=(1, 2)))


def test_samples_deterministic():
    a, b = draw_samples(CFG, 1, 1), draw_samples(CFG, 1, 1)
    assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("t", "y", "z", "th1", "th2"))


@pytest.mark.parametrize(
    "f1, f2",
    [
        (F1, F2),
        (F2, F1),
        (parse("CE(theta[1]+3*sin(theta[1]))"), F2),
        (parse("CE(theta[1]+3*sin(theta[1])+1)"), F2),
        (parse("CE(theta[1])"), parse("CE(theta[1]) - 0.01")),
        (parse("CE(0 - 4*theta[1])"), parse("CE(0 - 4*theta[1]) - 0.1")),
        (parse("CE(0 - 4*theta[1])"), parse("CE(0 - 4*theta[1]) - 30")),
    ],
)
def test_1dim_agrees_with_dense_scan(f1, f2):
    oracle_pass = dense_gap(f1, f2) >= -CFG.slack
    r = check_1dim(f1, f2, HALF, HALF, CFG)
    assert r.passed == oracle_pass
    if not r.passed:
        assert reverify(r)
        assert r.violating_point["th1"][0] >= r.violating_point["th2"][0]


def test_example_structure():
    assert check_sandwich(F1, FT, F2, CFG).passed
    assert not check_monotone_sufficient(F1, CFG).passed
    assert not check_monotone_sufficient(F2, CFG).passed
    assert check_monotone_sufficient(FT, CFG).passed
    swapped = check_sandwich(F2, FT, F1, CFG)
    assert swapped.verdict == FAIL and reverify(swapped)


def test_hupeng_minimal_constant_for_z_drift():
    # sup over u of (4 a u - 2 u^2) / a^2 = 2
    r = check_hupeng(parse("z[1][1]"), parse("z[1][1]"), CFG)
    assert r.passed
    assert 1.99 <= r.minimal_C <= 2.0 + 1e-9


def test_hupeng_shifted_generators():
    assert check_hupeng(parse("y[1] + 1"), parse("y[1]"), CFG).passed
    r = check_hupeng(parse("y[1]"), parse("y[1] + 0.001"), CFG)
    assert r.verdict == FAIL and reverify(r)
    with pytest.raises(ValueError):
        check_hupeng(parse("CE(theta[1])"), parse("0"), CFG)


def test_hupeng_multidim_cross_dependence():
    # row 1 depends increasingly on y[2]: classic cooperative system, passes
    assert check_hupeng(parse("y[2]; 0"), parse("y[2]; 0"), CFG).passed
    # decreasing dependence on another component fails
    r = check_hupeng(parse("0 - y[2]; 0"), parse("0 - y[2]; 0"), CFG)
    assert r.verdict == FAIL and reverify(r)


def test_anticipated_multidim():
    assert check_anticipated_multidim(F1, F2, HALF, HALF, CFG).passed
    r = check_anticipated_multidim(parse("CE(0 - theta[1])"), parse("CE(0 - theta[1])"), HALF, HALF, CFG)
    assert r.verdict == FAIL and reverify(r)


def test_structural():
    assert check_structural(parse("z[1][1] + CE(theta[2]); z[2][1] + theta[1]"), HALF, CFG).passed
    r = check_structural(parse("z[2][1]; z[1][1]"), HALF, CFG)
    assert r.verdict == FAIL and reverify(r)


def test_dispatch_by_dimension():
    assert check_dispatch(F1, F2, HALF, HALF, CFG).name == "1dim"
    f = parse("CE(theta[1]); CE(theta[2])")
    assert check_dispatch(f, f, HALF, HALF, CFG).name in ("structural", "anticipated_multidim")


def test_dominance_and_reports():
    r = check_pointwise_dominance(parse("y[1]"), parse("y[1] + 0.5"), CFG)
    assert r.verdict == FAIL and reverify(r)
    text = r.to_text()
    assert "verdict: fail" in text and "violating point" in text and "unverified" in text
    csv_text = r.violations_csv()
    assert csv_text.splitlines()[0] == "check,field,value"
    ok = check_pointwise_dominance(parse("y[1] + 1"), parse("y[1]"), CFG)
    assert ok.verdict == PASS and "no violation found at" in ok.to_text()
    assert ok.violations_csv() == "check,field,value\n"


def test_sample_config_validation():
    with pytest.raises(ValueError):
        SampleConfig(y_range=(1, 1))
    with pytest.raises(ValueError):
        SampleConfig(n_samples=0)


def test_reports_deterministic():
    a = check_1dim(parse("CE(theta[1]+3*sin(theta[1]))"), F2, HALF, HALF, CFG)
    b = check_1dim(parse("CE(theta[1]+3*sin(theta[1]))"), F2, HALF, HALF, CFG)
    assert a.to_text() == b.to_text()
