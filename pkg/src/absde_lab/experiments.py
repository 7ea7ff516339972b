"""Experiment runs shared by the CLI and the tests: solve a pair, summarise, write artifacts."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .absde import AbsdeProblem, solve_segmented
from .config import check_terminal_order, dumps, terminal_values
from .delay import compute_partition
from .engine import RegressionCache, TimeGrid, simulate

# Floating-point allowance on top of the 3 SE ordering threshold; deterministic
# problems have SE = 0 and otherwise equal solutions may differ in the last bits.
ORDER_ATOL = 1e-9


@dataclass
class PairRun:
    config: object
    ensemble: object
    sol1: object
    sol2: object
    generators: tuple

    @property
    def times(self):
        return self.ensemble.grid.times


def make_ensemble(cfg, d):
    grid = TimeGrid.from_horizon(cfg.T, cfg.K, cfg.h)
    return simulate(cfg.seed, cfg.n_paths, grid, d=d)


def solve_pair(cfg):
    """Solve both ABSDEs of ``cfg`` on one shared ensemble."""
    g1, g2, gt = cfg.generators()
    x1, x2 = cfg.terminals(g1.m)
    ens = make_ensemble(cfg, cfg.brownian_dim())
    xi1, xi2 = terminal_values(x1, ens), terminal_values(x2, ens)
    check_terminal_order(xi1, xi2)
    cache = RegressionCache(ens, cfg.degree)
    s1 = solve_segmented(AbsdeProblem(g1, cfg.delta1, xi1), ens, cache=cache)
    s2 = solve_segmented(AbsdeProblem(g2, cfg.delta2, xi2), ens, cache=cache)
    return PairRun(cfg, ens, s1, s2, (g1, g2, gt))


def _se(a):
    n = a.shape[0]
    return a.std(axis=0, ddof=1) / np.sqrt(n)


@dataclass
class Summary:
    times: np.ndarray
    mean1: np.ndarray  # [steps + 1, m]
    mean2: np.ndarray
    se1: np.ndarray
    se2: np.ndarray
    min_gap: np.ndarray  # [steps + 1], min over paths and components
    se_gap: np.ndarray  # [steps + 1], SE of the gap component attaining min_gap

    @property
    def worst(self):
        """Index and value of the most negative ``min_gap + 3 SE``."""
        margin = self.min_gap + 3.0 * self.se_gap
        i = int(np.argmin(margin))
        return i, float(margin[i])

    @property
    def ordering_holds(self):
        return self.worst[1] >= -ORDER_ATOL

    @property
    def global_min_gap(self):
        return float(self.min_gap.min())


def summarise(run):
    Y1, Y2 = run.sol1.Y, run.sol2.Y
    gap = Y1 - Y2
    se_gap_all = _se(gap)
    flat = gap.min(axis=0)  # [steps + 1, m]
    k = np.argmin(flat, axis=1)
    rows = np.arange(flat.shape[0])
    return Summary(
        times=run.times,
        mean1=Y1.mean(axis=0),
        mean2=Y2.mean(axis=0),
        se1=_se(Y1),
        se2=_se(Y2),
        min_gap=flat[rows, k],
        se_gap=se_gap_all[rows, k],
    )


# --- artifacts ---------------------------------------------------------------


def fmt(v):
    return repr(float(v))


def solution_csv(run, n_show):
    """``time,path,Y1_*,Y2_*,Z1_*_*,Z2_*_*`` for the first ``n_show`` paths."""
    Y1, Y2 = run.sol1.Y, run.sol2.Y
    Z1, Z2 = run.sol1.Z, run.sol2.Z
    m, d = Z1.shape[2], Z1.shape[3]
    header = ["time", "path"]
    header += [f"Y1_{k + 1}" for k in range(m)] + [f"Y2_{k + 1}" for k in range(m)]
    for j in (1, 2):
        header += [f"Z{j}_{k + 1}_{l + 1}" for k in range(m) for l in range(d)]
    lines = [",".join(header)]
    n_main = run.ensemble.grid.n_main
    n_show = min(n_show, Y1.shape[0])
    for i, t in enumerate(run.times):
        for p in range(n_show):
            row = [fmt(t), str(p)]
            row += [fmt(v) for v in Y1[p, i]] + [fmt(v) for v in Y2[p, i]]
            if i <= n_main:
                row += [fmt(v) for v in Z1[p, i].ravel()] + [fmt(v) for v in Z2[p, i].ravel()]
            else:
                row += [""] * (2 * m * d)
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _columns(summary):
    m = summary.mean1.shape[1]
    if m == 1:
        names = ["meanY1", "meanY2", "se1", "se2"]
        cols = [summary.mean1[:, 0], summary.mean2[:, 0], summary.se1[:, 0], summary.se2[:, 0]]
    else:
        names, cols = [], []
        for tag, arr in (("meanY1", summary.mean1), ("meanY2", summary.mean2), ("se1", summary.se1), ("se2", summary.se2)):
            for k in range(m):
                names.append(f"{tag}_{k + 1}")
                cols.append(arr[:, k])
    return names, cols


def summary_csv(summary):
    names, cols = _columns(summary)
    lines = [",".join(["time"] + names + ["min_gap"])]
    for i, t in enumerate(summary.times):
        lines.append(",".join([fmt(t)] + [fmt(c[i]) for c in cols] + [fmt(summary.min_gap[i])]))
    return "\n".join(lines) + "\n"


_COLORS = ("#1f77b4", "#d62728")


def svg_plot(summary, title):
    """Mean +/- 2 SE of the first component of Y1 and Y2 against time.

    Each curve carries its exact plotted means in ``data-mean`` (same text as
    the summary CSV) so the picture can be checked against the numbers.
    """
    W, H, L, R, TOP, BOT = 640, 400, 60, 20, 30, 40
    t = summary.times
    series = [(summary.mean1[:, 0], summary.se1[:, 0]), (summary.mean2[:, 0], summary.se2[:, 0])]
    lo = min(float((m - 2 * s).min()) for m, s in series)
    hi = max(float((m + 2 * s).max()) for m, s in series)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    t0, t1 = float(t[0]), float(t[-1])
    X = lambda v: L + (v - t0) / (t1 - t0) * (W - L - R)
    Yp = lambda v: TOP + (hi - v) / (hi - lo) * (H - TOP - BOT)
    pts = lambda xs, ys: " ".join(f"{X(a):.3f},{Yp(b):.3f}" for a, b in zip(xs, ys))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<title>{_esc(title)}</title>',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{L}" y1="{H - BOT}" x2="{W - R}" y2="{H - BOT}" stroke="black"/>',
        f'<line x1="{L}" y1="{TOP}" x2="{L}" y2="{H - BOT}" stroke="black"/>',
        f'<text x="{W / 2:.1f}" y="{H - 8}" text-anchor="middle" font-size="12">t</text>',
        f'<text x="{L - 5}" y="{TOP + 4}" text-anchor="end" font-size="10">{hi:.4g}</text>',
        f'<text x="{L - 5}" y="{H - BOT}" text-anchor="end" font-size="10">{lo:.4g}</text>',
        f'<text x="{L}" y="{H - BOT + 14}" text-anchor="middle" font-size="10">{t0:g}</text>',
        f'<text x="{W - R}" y="{H - BOT + 14}" text-anchor="middle" font-size="10">{t1:g}</text>',
    ]
    for j, ((mean, se), color) in enumerate(zip(series, _COLORS), start=1):
        upper, lower = mean + 2 * se, mean - 2 * se
        band = pts(t, upper) + " " + pts(t[::-1], lower[::-1])
        out.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        data = " ".join(fmt(v) for v in mean)
        out.append(
            f'<polyline id="meanY{j}" data-mean="{data}" points="{pts(t, mean)}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{W - R - 60}" y="{TOP + 14 * j}" font-size="11" fill="{color}">mean Y{j}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_text(directory, name, text):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_run(run, summary, directory, title, report_lines):
    cfg = run.config
    write_text(directory, "solution.csv", solution_csv(run, cfg.solution_paths))
    write_text(directory, "summary.csv", summary_csv(summary))
    write_text(directory, "plot.svg", svg_plot(summary, title))
    write_text(directory, "config.effective.ini", dumps(cfg))
    write_text(directory, "report.txt", "\n".join(report_lines) + "\n")


def ordering_lines(summary):
    i, margin = summary.worst
    return [
        f"min over grid/paths of (Y1 - Y2) = {summary.global_min_gap:.6g}",
        f"tightest time t = {summary.times[i]:g}: min gap {summary.min_gap[i]:.6g}, SE {summary.se_gap[i]:.3g}",
        "ordering " + ("holds" if summary.ordering_holds else "violated") + " at the 3 SE threshold",
    ]


def partition_table(cfg):
    p = compute_partition(cfg.delta1, cfg.delta2, cfg.T, cfg.resolution)
    rows = ["i,t_i"] + [f"{i},{t:.10g}" for i, t in enumerate(p.points)]
    return p, "\n".join(rows) + "\n"
