"""Acceptance criteria 1-8. Each test prints one ``criterion N: PASS|FAIL`` line."""
import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from absde_lab import experiments as ex
from absde_lab.absde import AbsdeProblem, solve_picard_global, solve_segmented
from absde_lab.bsde import SegmentProblem, solve_euler
from absde_lab.checker import (
    SampleConfig,
    check_1dim,
    check_hupeng,
    check_monotone_sufficient,
    check_sandwich,
    draw_samples,
    reverify,
)
from absde_lab.cli import main
from absde_lab.delay import DelayFunction, compute_partition
from absde_lab.dsl import evaluate, parse
from absde_lab.engine import RegressionCache, TimeGrid, simulate
from absde_lab.presets import load_preset

SEED = 1
N_PATHS = 10_000


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return emit


def _bsde_y(text, terminal, h, n_paths=N_PATHS):
    ens = simulate(SEED, n_paths, TimeGrid.from_horizon(1.0, 0.0, h))
    xi = terminal(ens)
    return ens, solve_euler(SegmentProblem(parse(text), xi, 0, ens.grid.n_main), ens, degree=3)


def test_criterion_1_partition(report):
    start = time.perf_counter()
    c = DelayFunction.constant(0.3, 1.0, 0.3)
    p = compute_partition(c, c, 1.0, 1e-4)
    exact = p.N == 4 and np.allclose(p.points, [1, 0.7, 0.4, 0.1, 0], rtol=0, atol=1e-4)
    a = DelayFunction.affine(0.1, 0.5, 1.0, 0.6)
    q = compute_partition(a, a, 1.0, 1e-4)
    ref = [1.0]
    while ref[-1] > 0:
        ref.append(max((ref[-1] - 0.1) / 1.5, 0.0))
    affine_ok = len(q.points) == len(ref) and np.allclose(q.points, ref, rtol=0, atol=1e-3)
    elapsed = time.perf_counter() - start
    report(1, exact and affine_ok and elapsed < 1.0, f"constant {p.points}, affine max err "
           f"{max(abs(x - y) for x, y in zip(q.points, ref)):.2e}, {elapsed:.3f}s")


def test_criterion_2a_zero_generator(report):
    start = time.perf_counter()
    ens, sol = _bsde_y("0", lambda e: e.B[:, -1, 0], 0.01)
    err = float(np.abs(sol.Y[:, :, 0] - ens.B[:, :, 0]).mean(axis=0).max())
    elapsed = time.perf_counter() - start
    report("2(a)", err <= 0.02 and elapsed < 30, f"max_t mean|Y - B| = {err:.4f}, {elapsed:.2f}s")


def test_criterion_2b_linear(report):
    start = time.perf_counter()
    _, sol = _bsde_y("0 - y[1]", lambda e: np.ones(e.n_paths), 0.01)
    err = abs(float(sol.Y[0, 0, 0]) - math.exp(-1))
    elapsed = time.perf_counter() - start
    report("2(b)", err <= 0.01 and elapsed < 30, f"|Y0 - 1/e| = {err:.2e}, {elapsed:.2f}s")


def test_criterion_2c_z_drift(report):
    start = time.perf_counter()
    _, sol = _bsde_y("z[1][1]", lambda e: e.B[:, -1, 0], 0.01)
    err = abs(float(sol.Y[:, 0, 0].mean()) - 1.0)
    elapsed = time.perf_counter() - start
    report("2(c)", err <= 0.02 and elapsed < 30, f"|Y0 - 1| = {err:.4f}, {elapsed:.2f}s")


def test_criterion_3_anticipated_closed_form(report):
    start = time.perf_counter()
    # deterministic problem: the ensemble only carries the grid; h = 0.001
    # keeps the first-order error h/4 below the 2e-3 tolerance
    ens = simulate(SEED, 256, TimeGrid.from_horizon(1.0, 0.5, 0.001))
    xi = np.ones((ens.n_paths, ens.grid.n_pad + 1, 1))
    sol = solve_segmented(AbsdeProblem(parse("CE(theta[1])"), DelayFunction.constant(0.5, 1.0, 0.5), xi), ens)
    err = abs(float(sol.Y[0, 0, 0]) - 2.125)
    elapsed = time.perf_counter() - start
    report(3, err <= 2e-3 and elapsed < 30, f"|Y0 - 2.125| = {err:.2e} at h = 0.001, {elapsed:.2f}s")


EQUIVALENCE_GENERATORS = [
    "CE(theta[1]+2*sin(theta[1])+1)",
    "CE(theta[1]+cos(2*theta[1])-2)",
    "CE(theta[1]+sin(theta[1]))",
    "CE(theta[1])",
    "0 - y[1] + CE(sin(theta[1]))",
    "z[1][1] + 0.5*CE(theta[1])",
    "0.3*theta[1] - 0.2*y[1] + cos(t)",
    "CE(0 - 4*theta[1])",
]


def test_criterion_4_oracle_equivalence(report):
    start = time.perf_counter()
    ens = simulate(SEED, N_PATHS, TimeGrid.from_horizon(1.0, 0.5, 0.01))
    cache = RegressionCache(ens, 3)
    delta = DelayFunction.constant(0.5, 1.0, 0.5)
    xi = np.cos(ens.B[:, ens.grid.n_main :, :])
    worst, detail = 0.0, []
    ok = True
    for text in EQUIVALENCE_GENERATORS:
        prob = AbsdeProblem(parse(text), delta, xi)
        seg = solve_segmented(prob, ens, cache=cache)
        pic = solve_picard_global(prob, ens, cache=cache)
        diff = float(np.max(np.abs(seg.Y - pic.Y)))
        se = float(np.max(seg.Y.std(axis=0, ddof=1)) / math.sqrt(ens.n_paths))
        ok &= diff <= max(1e-3, 5 * se)
        worst = max(worst, diff)
    elapsed = time.perf_counter() - start
    report(4, ok and elapsed < 120, f"{len(EQUIVALENCE_GENERATORS)} generators, sup diff {worst:.2e}, {elapsed:.1f}s")


def test_criterion_5_example(report):
    start = time.perf_counter()
    cfg = load_preset("paper-example")
    assert (cfg.seed, cfg.h, cfg.n_paths) == (1, 0.01, 10_000)
    g1, g2, gt = cfg.generators()
    sandwich = check_sandwich(g1, gt, g2, cfg.checker)
    mono = [check_monotone_sufficient(g, cfg.checker) for g in (g1, g2)]
    summary = ex.summarise(ex.solve_pair(cfg))
    elapsed = time.perf_counter() - start
    ok = sandwich.passed and not mono[0].passed and not mono[1].passed and summary.ordering_holds
    report(5, ok and elapsed < 120, f"sandwich {sandwich.verdict}, monotone {mono[0].verdict}/{mono[1].verdict}, "
           f"min(Y1 - Y2) = {summary.global_min_gap:.4g}, {elapsed:.1f}s")


HUPENG_PAIRS = [
    ("y[1] + 1", "y[1]"),
    ("y[1]", "y[1] + 0.001"),
    ("z[1][1]", "z[1][1]"),
    ("z[1][1]", "z[1][1] - 1"),
    ("z[1][1]", "0.5*z[1][1]"),
    ("abs(z[1][1])", "z[1][1]"),
    ("y[1]", "2*y[1]"),
    ("max(y[1], 0)", "min(y[1], 0)"),
    ("cos(t) + y[1]", "y[1]"),
    ("t - 0.5 + y[1]", "y[1]"),
    ("sin(y[1]) + z[1][1]", "sin(y[1]) + z[1][1] - 0.5"),
    ("sin(y[1])", "cos(y[1])"),
]


def test_criterion_6_checker_coherence(report):
    cfg = load_preset("violation")
    g1, g2, _ = cfg.generators()
    r = check_1dim(g1, g2, cfg.delta1, cfg.delta2, cfg.checker)
    summary = ex.summarise(ex.solve_pair(cfg))
    i, _ = summary.worst
    crossing = summary.min_gap[i] < -3 * summary.se_gap[i]
    violation_ok = r.verdict == "fail" and reverify(r) and crossing

    sc = SampleConfig(n_samples=10_000)
    S = draw_samples(sc, 1, 1)
    disagreements = []
    for a, b in HUPENG_PAIRS:
        f, g = parse(a), parse(b)
        direct = evaluate(f, S.t, S.yp, S.z) - evaluate(g, S.t, S.yp, S.z)
        direct_pass = bool(direct.min() >= -sc.slack)
        if check_hupeng(f, g, sc).passed != direct_pass:
            disagreements.append((a, b))
    report(6, violation_ok and not disagreements,
           f"violation: {r.verdict}, witness re-verified, min(Y1 - Y2) = {summary.global_min_gap:.4g}; "
           f"Hu-Peng vs direct: {len(disagreements)} disagreements over {len(HUPENG_PAIRS)} pairs")


@pytest.mark.parametrize(
    "args",
    [
        ["partition"],
        ["run-example"],
        ["compare"],
        ["violation-demo", "--expect-fail"],
    ],
    ids=["partition", "run-example", "compare", "violation-demo"],
)
def test_criterion_7_determinism(report, tmp_path, args):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        res = CliRunner().invoke(main, [*args, "--out", str(d)])
        assert res.exit_code == 0, res.output
        outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))})
    same = outs[0] == outs[1] and len(outs[0]) > 0
    report(7, same, f"{args[0]}: {len(outs[0])} CSV file(s) byte-identical")


def test_criterion_8_grid_convergence(report):
    errs = []
    for h in (0.01, 0.005):
        _, sol = _bsde_y("0 - y[1]", lambda e: np.ones(e.n_paths), h)
        errs.append(abs(float(sol.Y[0, 0, 0]) - math.exp(-1)))
    ratio = errs[0] / errs[1]
    report(8, ratio >= 1.5, f"errors {errs[0]:.3e} -> {errs[1]:.3e}, ratio {ratio:.3f}")
