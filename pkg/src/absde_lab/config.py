"""Experiment configuration files.

Grammar: INI-style ``key = value`` lines under ``[section]`` headers, ``#``
comments, keys case-sensitive. Sections and keys::

    [problem]     T, K, h, n_paths, seed, degree, resolution (partition table only)
    [delay1]      kind = constant | affine | tabulated
                  constant: c;  affine: a, b (delay a + b*t);
                  tabulated: times, values (whitespace-separated lists)
    [delay2]      optional, same keys; defaults to [delay1]
    [generators]  f1, f2, f_tilde (optional)
    [terminal]    xi1, xi2: terminal expressions in t and b[l] (B at time t)
    [checker]     n_samples, seed, slack, kappa, y_range, z_range, theta_range
    [output]      dir, solution_paths

Every key except ``[problem] T`` and the two generators has a default.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .checker import SampleConfig
from .delay import DelayFunction
from .dsl import evaluate_terminal, parse


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    T: float
    K: float
    h: float
    n_paths: int
    seed: int
    delta1: DelayFunction
    delta2: DelayFunction
    f1: str
    f2: str
    xi1: str
    xi2: str
    f_tilde: str | None = None
    degree: int = 3
    resolution: float = 1e-4
    checker: SampleConfig = field(default_factory=SampleConfig)
    out_dir: str = "out"
    solution_paths: int = 20

    def override(self, seed=None, n_paths=None, h=None, out_dir=None):
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if n_paths is not None:
            kw["n_paths"] = int(n_paths)
        if h is not None:
            kw["h"] = float(h)
        if out_dir is not None:
            kw["out_dir"] = str(out_dir)
        return replace(self, **kw) if kw else self

    def generators(self):
        """Parsed ``(f1, f2, f_tilde or None)`` with matching dimensions."""
        g1, g2 = parse(self.f1), parse(self.f2)
        if g1.m != g2.m:
            raise ConfigError(f"f1 has m={g1.m} but f2 has m={g2.m}")
        gt = parse(self.f_tilde, m=g1.m) if self.f_tilde else None
        return g1, g2, gt

    def terminals(self, m):
        x1 = parse(self.xi1, mode="terminal")
        x2 = parse(self.xi2, mode="terminal")
        for name, x in (("xi1", x1), ("xi2", x2)):
            if x.m != m:
                raise ConfigError(f"{name} has {x.m} component(s) but the generators have m={m}")
        return x1, x2

    def brownian_dim(self):
        exprs = [e for e in self.generators() if e is not None]
        return max([e.d for e in exprs] + [e.d for e in self.terminals(exprs[0].m)])


def terminal_values(expr, ensemble):
    """``xi`` on the pad grid ``[T, T + K]``: shape ``[paths, n_pad + 1, m]``."""
    g = ensemble.grid
    B = ensemble.B
    out = np.empty((ensemble.n_paths, g.n_pad + 1, expr.m))
    for j in range(g.n_pad + 1):
        n = g.n_main + j
        out[:, j] = evaluate_terminal(expr, g.time(n), B[:, n, : max(expr.d, 1)])
    return out


def check_terminal_order(xi1, xi2, tol=0.0):
    """Raise ConfigError unless ``xi1 >= xi2`` on every path, time and component."""
    gap = xi1 - xi2
    if np.any(gap < -tol):
        p, j, k = np.unravel_index(int(np.argmin(gap)), gap.shape)
        raise ConfigError(
            f"terminal data not ordered: xi1 - xi2 = {gap[p, j, k]:.6g} on path {p}, pad step {j}, component {k + 1}"
        )


# --- parsing -----------------------------------------------------------------


def _parser():
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    return cp


def _floats(text):
    return tuple(float(x) for x in text.split())


def _get(sec, key, conv, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"missing key [{sec.name}] {key}")
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for [{sec.name}] {key}: {sec[key]!r}") from exc


def _delay(sec, T, K):
    kind = sec.get("kind", "constant")
    try:
        if kind == "constant":
            return DelayFunction.constant(_get(sec, "c", float, required=True), T, K)
        if kind == "affine":
            return DelayFunction.affine(
                _get(sec, "a", float, required=True), _get(sec, "b", float, required=True), T, K
            )
        if kind == "tabulated":
            return DelayFunction.tabulated(
                _get(sec, "times", _floats, required=True), _get(sec, "values", _floats, required=True), T, K
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[{sec.name}]: {exc}") from exc
    raise ConfigError(f"[{sec.name}] unknown delay kind {kind!r}")


def _pair(text):
    lo, hi = _floats(text)
    return (lo, hi)


def loads(text):
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for name in ("problem", "delay1", "generators", "terminal"):
        if not cp.has_section(name):
            raise ConfigError(f"missing section [{name}]")
    p = cp["problem"]
    T = _get(p, "T", float, required=True)
    K = _get(p, "K", float, 0.0)
    d1 = _delay(cp["delay1"], T, K)
    d2 = _delay(cp["delay2"], T, K) if cp.has_section("delay2") else d1
    g = cp["generators"]
    t = cp["terminal"]
    chk = SampleConfig()
    if cp.has_section("checker"):
        c = cp["checker"]
        try:
            chk = SampleConfig(
                T=T,
                y_range=_get(c, "y_range", _pair, chk.y_range),
                z_range=_get(c, "z_range", _pair, chk.z_range),
                theta_range=_get(c, "theta_range", _pair, chk.theta_range),
                n_samples=_get(c, "n_samples", int, chk.n_samples),
                seed=_get(c, "seed", int, chk.seed),
                slack=_get(c, "slack", float, chk.slack),
                kappa=_get(c, "kappa", float, chk.kappa),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[checker]: {exc}") from exc
    else:
        chk = replace(chk, T=T)
    o = cp["output"] if cp.has_section("output") else {}
    cfg = ExperimentConfig(
        T=T,
        K=K,
        h=_get(p, "h", float, 0.01),
        n_paths=_get(p, "n_paths", int, 10_000),
        seed=_get(p, "seed", int, 1),
        degree=_get(p, "degree", int, 3),
        resolution=_get(p, "resolution", float, 1e-4),
        delta1=d1,
        delta2=d2,
        f1=_get(g, "f1", str, required=True),
        f2=_get(g, "f2", str, required=True),
        f_tilde=_get(g, "f_tilde", str, None) or None,
        xi1=_get(t, "xi1", str, "0"),
        xi2=_get(t, "xi2", str, "0"),
        checker=chk,
        out_dir=o.get("dir", "out") if o else "out",
        solution_paths=int(o.get("solution_paths", 20)) if o else 20,
    )
    if cfg.h <= 0 or cfg.n_paths < 2 or cfg.T <= 0 or cfg.K < 0:
        raise ConfigError("need h > 0, n_paths >= 2, T > 0, K >= 0")
    return cfg


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


# --- dumping -----------------------------------------------------------------


def _num(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _delay_lines(d):
    if d.kind == "constant":
        return {"kind": "constant", "c": _num(d.params[0])}
    if d.kind == "affine":
        return {"kind": "affine", "a": _num(d.params[0]), "b": _num(d.params[1])}
    return {
        "kind": "tabulated",
        "times": " ".join(_num(x) for x in d.times),
        "values": " ".join(_num(x) for x in d.params),
    }


def dumps(cfg):
    """Effective configuration; ``loads(dumps(cfg)) == cfg``."""
    cp = _parser()
    cp["problem"] = {
        "T": _num(cfg.T),
        "K": _num(cfg.K),
        "h": _num(cfg.h),
        "n_paths": _num(cfg.n_paths),
        "seed": _num(cfg.seed),
        "degree": _num(cfg.degree),
        "resolution": _num(cfg.resolution),
    }
    cp["delay1"] = _delay_lines(cfg.delta1)
    if cfg.delta2 != cfg.delta1:
        cp["delay2"] = _delay_lines(cfg.delta2)
    gens = {"f1": cfg.f1, "f2": cfg.f2}
    if cfg.f_tilde:
        gens["f_tilde"] = cfg.f_tilde
    cp["generators"] = gens
    cp["terminal"] = {"xi1": cfg.xi1, "xi2": cfg.xi2}
    c = cfg.checker
    pair = lambda r: f"{_num(r[0])} {_num(r[1])}"
    cp["checker"] = {
        "n_samples": _num(c.n_samples),
        "seed": _num(c.seed),
        "slack": _num(c.slack),
        "kappa": _num(c.kappa),
        "y_range": pair(c.y_range),
        "z_range": pair(c.z_range),
        "theta_range": pair(c.theta_range),
    }
    cp["output"] = {"dir": cfg.out_dir, "solution_paths": _num(cfg.solution_paths)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()

