"""Sampled verification of comparison conditions for generator pairs.

A passing report means no violation was found among the samples; a failing
report carries a concrete violating point that :func:`reverify` recomputes.
The anticipated argument is sampled as ordered real vectors
``theta1 >= theta2`` and CE nodes are evaluated at those values, which is
exact for deterministic generators.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .dsl import estimate_lipschitz, evaluate, to_text

PASS = "pass_sampled"
FAIL = "fail"

UNVERIFIED = (
    "H3 (continuity in time) assumed, not checked",
    "theta restricted to deterministic ordered vectors",
    "existence of C is only supported by sampling, never proved",
)


@dataclass
class SampleConfig:
    T: float = 1.0
    y_range: tuple = (-3.0, 3.0)
    z_range: tuple = (-3.0, 3.0)
    theta_range: tuple = (-math.pi, math.pi)
    n_samples: int = 10_000
    seed: int = 0
    slack: float = 1e-9
    kappa: float = 100.0
    lipschitz_samples: int = 4000

    def __post_init__(self):
        for name in ("y_range", "z_range", "theta_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be a nonempty interval")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


@dataclass
class CheckReport:
    name: str
    verdict: str
    samples_used: int
    violating_point: dict | None = None
    minimal_C: float | None = None
    C_cap: float | None = None
    unverified_hypotheses: tuple = UNVERIFIED
    notes: list = field(default_factory=list)
    kind: str = ""
    inputs: tuple = ()
    slack: float = 0.0

    @property
    def passed(self):
        return self.verdict == PASS

    def to_text(self):
        lines = [f"[{self.name}] verdict: {self.verdict} ({self.samples_used} samples)"]
        if self.verdict == PASS:
            lines.append(f"  no violation found at {self.samples_used} samples")
        if self.minimal_C is not None:
            lines.append(f"  minimal C = {self.minimal_C:.6g} (cap {self.C_cap:.6g})")
        if self.violating_point is not None:
            lines.append("  violating point:")
            for k, v in self.violating_point.items():
                lines.append(f"    {k} = {_fmt(v)}")
        for n in self.notes:
            lines.append(f"  note: {n}")
        for u in self.unverified_hypotheses:
            lines.append(f"  unverified: {u}")
        return "\n".join(lines)

    def violations_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "field", "value"])
        if self.violating_point is not None:
            for k, v in self.violating_point.items():
                w.writerow([self.name, k, _fmt(v)])
        return buf.getvalue()


def _fmt(v):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return repr(float(a))
    return " ".join(repr(float(x)) for x in a.ravel())


# --- sampling ----------------------------------------------------------------


@dataclass
class Samples:
    t: np.ndarray
    y: np.ndarray
    yp: np.ndarray
    z: np.ndarray
    zp: np.ndarray
    th1: np.ndarray
    th2: np.ndarray

    def __len__(self):
        return self.t.size

    def point(self, i):
        return {k: getattr(self, k)[i].copy() for k in ("t", "y", "yp", "z", "zp", "th1", "th2")}


def _scale(u, rng_):
    lo, hi = rng_
    return lo + (hi - lo) * u


def _corners(cfg, m, d):
    ylo, yhi = cfg.y_range
    zlo, zhi = cfg.z_range
    tlo, thi = cfg.theta_range
    rows = []
    for t in (0.0, cfg.T):
        for th1, th2 in ((tlo, tlo), (thi, thi), (thi, tlo), (0.0, 0.0), (0.0, tlo), (thi, 0.0)):
            for y in (-1e-6, ylo):
                for yp in (0.0, ylo, yhi):
                    for zv in (0.0, zlo, zhi):
                        rows.append((t, y, yp, zv, th1, th2))
    n = len(rows)
    a = np.asarray(rows)
    return Samples(
        t=a[:, 0],
        y=np.repeat(a[:, 1:2], m, axis=1),
        yp=np.repeat(a[:, 2:3], m, axis=1),
        z=np.broadcast_to(a[:, 3, None, None], (n, m, d)).copy(),
        zp=np.broadcast_to(a[:, 3, None, None], (n, m, d)).copy(),
        th1=np.repeat(a[:, 4:5], m, axis=1),
        th2=np.repeat(a[:, 5:6], m, axis=1),
    )


def draw_samples(cfg, m, d):
    """Low-discrepancy points over the box, adversarial variants, and corner points.

    Roughly half the points come straight from a scrambled Sobol sequence.
    The rest reuse Sobol base points with one or more of: ``z' = z``,
    ``|y^-|`` log-uniform in [1e-8, 1], ``theta2 = theta1`` or a
    log-uniform gap. Those are the regimes where violations of the
    viability-type inequalities live.
    """
    corners = _corners(cfg, m, d)
    n_body = max(cfg.n_samples - len(corners), 1)
    dim = 1 + 2 * m + 2 * m * d + 2 * m
    sob = qmc.Sobol(dim, scramble=True, seed=cfg.seed)
    u = sob.random_base2(max(1, math.ceil(math.log2(n_body))))[:n_body]
    rng = np.random.default_rng(cfg.seed + 1)
    c = 0
    t = u[:, c] * cfg.T
    c += 1
    y = _scale(u[:, c : c + m], cfg.y_range)
    c += m
    yp = _scale(u[:, c : c + m], cfg.y_range)
    c += m
    z = _scale(u[:, c : c + m * d], cfg.z_range).reshape(n_body, m, d)
    c += m * d
    zp = _scale(u[:, c : c + m * d], cfg.z_range).reshape(n_body, m, d)
    c += m * d
    th1 = _scale(u[:, c : c + m], cfg.theta_range)
    c += m
    th2 = th1 - u[:, c : c + m] * (th1 - cfg.theta_range[0])

    adv = np.arange(n_body) % 2 == 1
    k = int(adv.sum())
    couple = adv.copy()
    couple[adv] = rng.random(k) < 0.6
    zp[couple] = z[couple]

    small = adv.copy()
    small[adv] = rng.random(k) < 0.6
    ks = int(small.sum())
    mag = 10.0 ** rng.uniform(-8, 0, size=(ks, m))
    neg = rng.random((ks, m)) < 0.5
    neg[np.arange(ks), rng.integers(0, m, size=ks)] = True
    y_small = np.where(neg, -mag, mag * (cfg.y_range[1] - 0.0))
    y[small] = y_small

    thmode = rng.random(n_body)
    eq = adv & (thmode < 0.35)
    th2[eq] = th1[eq]
    close = adv & (thmode >= 0.35) & (thmode < 0.7)
    nc = int(close.sum())
    gap = 10.0 ** rng.uniform(-6, 0, size=(nc, m)) * (cfg.theta_range[1] - cfg.theta_range[0])
    th2[close] = th1[close] - np.minimum(gap, th1[close] - cfg.theta_range[0])

    body = Samples(t, y, yp, z, zp, th1, th2)
    return Samples(
        *(np.concatenate([getattr(corners, f), getattr(body, f)]) for f in ("t", "y", "yp", "z", "zp", "th1", "th2"))
    )


# --- inequality cores --------------------------------------------------------


def _viability_terms(f1, f2, S, use_theta, slack):
    """``(LHS - RHS_0 - slack term, |y^-|^2)`` of the Hu-Peng type inequality per sample."""
    yplus = np.maximum(S.y, 0.0)
    yminus = np.maximum(-S.y, 0.0)
    th1 = S.th1 if use_theta else None
    th2 = S.th2 if use_theta else None
    F1 = evaluate(f1, S.t, yplus + S.yp, S.z, None, th1)
    F2 = evaluate(f2, S.t, S.yp, S.zp, None, th2)
    lhs = -4.0 * np.sum(yminus * (F1 - F2), axis=-1)
    neg = S.y < 0
    rhs0 = 2.0 * np.sum(neg * np.sum((S.z - S.zp) ** 2, axis=-1), axis=-1)
    excess = lhs - rhs0 - 4.0 * slack * np.sum(yminus, axis=-1)
    return excess, np.sum(yminus**2, axis=-1)


def _lipschitz_box(cfg):
    return {"y": cfg.y_range, "z": cfg.z_range, "theta": cfg.theta_range}


def _cap(cfg, *exprs):
    Ls = [
        estimate_lipschitz(e, _lipschitz_box(cfg), cfg.lipschitz_samples, cfg.seed, (0.0, cfg.T))
        for e in exprs
    ]
    return cfg.kappa * (1.0 + sum(L * L for L in Ls)), Ls


def _same_shape(f1, f2):
    if f1.m != f2.m:
        raise ValueError(f"generators have different output dimensions ({f1.m} vs {f2.m})")
    return f1.m, max(f1.d, f2.d)


def _viability_check(name, kind, f1, f2, cfg, use_theta):
    m, d = _same_shape(f1, f2)
    S = draw_samples(cfg, m, d)
    excess, ym2 = _viability_terms(f1, f2, S, use_theta, cfg.slack)
    cap, Ls = _cap(cfg, f1, f2)
    mask = ym2 > 0
    ratio = np.full(len(S), -np.inf)
    ratio[mask] = excess[mask] / ym2[mask]
    ratio[~np.isfinite(ratio) & mask] = np.inf
    i = int(np.argmax(ratio))
    minimal_C = float(ratio[i])
    report = CheckReport(
        name,
        PASS,
        len(S),
        minimal_C=minimal_C,
        C_cap=cap,
        kind=kind,
        inputs=(f1, f2),
        slack=cfg.slack,
        notes=[f"Lipschitz estimates {', '.join(f'{L:.4g}' for L in Ls)}; cap = kappa*(1 + sum L^2)"],
    )
    if not (minimal_C <= cap):
        report.verdict = FAIL
        report.violating_point = S.point(i)
    return report


def check_hupeng(g1, g2, config):
    """Multidimensional BSDE comparison inequality for anticipation-free generators."""
    for g in (g1, g2):
        if not g.anticipation_free:
            raise ValueError("check_hupeng needs anticipation-free generators")
    return _viability_check("hupeng", "viability", g1, g2, config, use_theta=False)


def check_anticipated_multidim(f1, f2, delta1, delta2, config):
    """Anticipated comparison inequality, C uniform over ordered theta pairs."""
    r = _viability_check("anticipated_multidim", "viability", f1, f2, config, use_theta=True)
    if delta1 is not None and delta2 is not None and delta1 == delta2:
        r.notes.append("equal delays: the condition is the single-delay reduction")
    return r


def _gap_report(name, kind, gap, S, inputs, cfg, notes=()):
    i = int(np.argmin(gap))
    r = CheckReport(name, PASS, len(S), kind=kind, inputs=inputs, slack=cfg.slack, notes=list(notes))
    if not (gap[i] >= -cfg.slack):
        r.verdict = FAIL
        r.violating_point = S.point(i)
        r.violating_point["gap"] = float(gap[i])
    return r


def check_1dim(f1, f2, delta1, delta2, config):
    """``f1(s, y, z, theta1) >= f2(s, y, z, theta2)`` for all ordered ``theta1 >= theta2`` (m = 1)."""
    if f1.m != 1 or f2.m != 1:
        raise ValueError("check_1dim needs m = 1")
    _, d = _same_shape(f1, f2)
    S = draw_samples(config, 1, d)
    gap = (
        evaluate(f1, S.t, S.yp, S.z, None, S.th1) - evaluate(f2, S.t, S.yp, S.z, None, S.th2)
    )[:, 0]
    notes = []
    if delta1 is not None and delta1 == delta2:
        notes.append("equal delays: same inequality with a single anticipated time")
    return _gap_report("1dim", "1dim", gap, S, (f1, f2), config, notes)


def check_monotone_sufficient(f, config):
    """``f(s, y, z, .)`` nondecreasing in theta on ordered pairs at equal ``(s, y, z)``."""
    S = draw_samples(config, f.m, f.d)
    gap = evaluate(f, S.t, S.yp, S.z, None, S.th1) - evaluate(f, S.t, S.yp, S.z, None, S.th2)
    return _gap_report("monotone", "monotone", gap.min(axis=-1), S, (f,), config)


def check_pointwise_dominance(f1, f2, config):
    """``f1 >= f2`` at equal arguments (theta1 = theta2)."""
    m, d = _same_shape(f1, f2)
    S = draw_samples(config, m, d)
    S.th2 = S.th1
    gap = evaluate(f1, S.t, S.yp, S.z, None, S.th1) - evaluate(f2, S.t, S.yp, S.z, None, S.th1)
    return _gap_report("dominance", "dominance", gap.min(axis=-1), S, (f1, f2), config)


def check_sandwich(f1, f_tilde, f2, config):
    """``f1 >= f_tilde >= f2`` at equal theta and ``f_tilde`` nondecreasing in theta."""
    upper = check_pointwise_dominance(f1, f_tilde, config)
    lower = check_pointwise_dominance(f_tilde, f2, config)
    mono = check_monotone_sufficient(f_tilde, config)
    parts = (("f1 >= f_tilde", upper), ("f_tilde >= f2", lower), ("f_tilde nondecreasing", mono))
    for label, r in parts:
        if not r.passed:
            r.name = "sandwich"
            r.notes.append(f"failed sub-check: {label}")
            return r
    return CheckReport(
        "sandwich",
        PASS,
        upper.samples_used,
        kind="sandwich",
        inputs=(f1, f_tilde, f2),
        slack=config.slack,
        notes=[f"{label}: pass" for label, _ in parts],
    )


def check_structural(f, delta, config):
    """Same generator, same delay: z-locality per row and monotone shift off the diagonal."""
    m, d = f.m, f.d
    S = draw_samples(config, m, d)
    rng = np.random.default_rng(config.seed + 7)
    n = len(S)
    base = evaluate(f, S.t, S.yp, S.z, None, S.th1)
    zlo, zhi = config.z_range
    for k in range(m):
        zq = rng.uniform(zlo, zhi, size=S.z.shape)
        zq[:, k, :] = S.z[:, k, :]
        moved = evaluate(f, S.t, S.yp, zq, None, S.th1)[:, k]
        diff = np.abs(moved - base[:, k])
        i = int(np.argmax(diff))
        if diff[i] > config.slack:
            point = S.point(i)
            point["z_perturbed"] = zq[i]
            point["k"] = k + 1
            point["abs_change"] = float(diff[i])
            return CheckReport(
                "structural",
                FAIL,
                n,
                violating_point=point,
                kind="z_locality",
                inputs=(f,),
                slack=config.slack,
                notes=[f"component {k + 1} depends on z rows other than {k + 1}"],
            )
    ylo, yhi = config.y_range
    for k in range(m):
        shift = np.abs(rng.uniform(0, yhi - ylo, size=(n, m)))
        shift[rng.random((n, m)) < 0.3] = 0.0
        shift[:, k] = 0.0
        gap = (
            evaluate(f, S.t, shift + S.yp, S.z, None, S.th1)[:, k]
            - evaluate(f, S.t, S.yp, S.z, None, S.th2)[:, k]
        )
        i = int(np.argmin(gap))
        if gap[i] < -config.slack:
            point = S.point(i)
            point["shift"] = shift[i]
            point["k"] = k + 1
            point["gap"] = float(gap[i])
            return CheckReport(
                "structural",
                FAIL,
                n,
                violating_point=point,
                kind="monotone_shift",
                inputs=(f,),
                slack=config.slack,
                notes=[f"component {k + 1} decreases under a nonnegative off-diagonal shift"],
            )
    return CheckReport("structural", PASS, n, kind="structural", inputs=(f,), slack=config.slack)


def check_dispatch(f1, f2, delta1, delta2, config):
    """Pick the applicable comparison check from the dimension and structure."""
    if f1.m == 1:
        return check_1dim(f1, f2, delta1, delta2, config)
    if f1 == f2 and delta1 == delta2:
        r = check_structural(f1, delta1, config)
        if not r.passed:
            return r
    return check_anticipated_multidim(f1, f2, delta1, delta2, config)


def reverify(report):
    """Recompute the violation at ``report.violating_point``; True iff it is one."""
    p = report.violating_point
    if p is None:
        return False
    eps = report.slack
    one = lambda a: np.asarray(a, dtype=float)[None]
    t = np.asarray([p["t"]], dtype=float)
    if report.kind == "viability":
        f1, f2 = report.inputs
        S = Samples(t, one(p["y"]), one(p["yp"]), one(p["z"]), one(p["zp"]), one(p["th1"]), one(p["th2"]))
        use_theta = not (f1.anticipation_free and f2.anticipation_free)
        excess, ym2 = _viability_terms(f1, f2, S, use_theta, eps)
        return bool(ym2[0] > 0 and excess[0] > report.C_cap * ym2[0])
    if report.kind == "1dim":
        f1, f2 = report.inputs
        g = evaluate(f1, t, one(p["yp"]), one(p["z"]), None, one(p["th1"])) - evaluate(
            f2, t, one(p["yp"]), one(p["z"]), None, one(p["th2"])
        )
        return bool(p["th1"][0] >= p["th2"][0] and g[0, 0] < -eps)
    if report.kind == "monotone":
        (f,) = report.inputs
        g = evaluate(f, t, one(p["yp"]), one(p["z"]), None, one(p["th1"])) - evaluate(
            f, t, one(p["yp"]), one(p["z"]), None, one(p["th2"])
        )
        return bool(np.all(p["th1"] >= p["th2"]) and g.min() < -eps)
    if report.kind == "dominance":
        f1, f2 = report.inputs
        g = evaluate(f1, t, one(p["yp"]), one(p["z"]), None, one(p["th1"])) - evaluate(
            f2, t, one(p["yp"]), one(p["z"]), None, one(p["th1"])
        )
        return bool(g.min() < -eps)
    if report.kind == "z_locality":
        (f,) = report.inputs
        k = p["k"] - 1
        a = evaluate(f, t, one(p["yp"]), one(p["z"]), None, one(p["th1"]))[0, k]
        b = evaluate(f, t, one(p["yp"]), one(p["z_perturbed"]), None, one(p["th1"]))[0, k]
        return bool(abs(a - b) > eps)
    if report.kind == "monotone_shift":
        (f,) = report.inputs
        k = p["k"] - 1
        a = evaluate(f, t, one(p["shift"] + p["yp"]), one(p["z"]), None, one(p["th1"]))[0, k]
        b = evaluate(f, t, one(p["yp"]), one(p["z"]), None, one(p["th2"]))[0, k]
        return bool(a - b < -eps)
    raise ValueError(f"cannot re-verify report kind {report.kind!r}")


def describe_pair(f1, f2):
    return f"f1 = {to_text(f1)}; f2 = {to_text(f2)}"
