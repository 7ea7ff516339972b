"""Generator expressions ``f(t, y, z, theta)`` with a conditional-expectation operator.

Grammar (components separated by ``;``)::

    component := sum
    sum       := product (("+" | "-") product)*
    product   := unary (("*" | "/") unary)*
    unary     := "-" unary | atom
    atom      := NUMBER | "t" | "y[k]" | "z[k][l]" | "theta[k]"
               | NAME "(" sum ("," sum)* ")" | "CE(" sum ")" | "(" sum ")"

Indices are 1-based. ``CE(...)`` may only contain ``theta``, ``t`` and
literals, and cannot be nested: the solver replaces each CE node by the
regression estimate of ``E[body(theta_{t+delta(t)}) | F_t]``.

Terminal expressions (``mode="terminal"``) use ``t`` and ``b[l]`` (the
Brownian path value at ``t``) instead.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np


class ParseError(ValueError):
    def __init__(self, msg, line, col):
        super().__init__(f"{msg} (line {line}, column {col})")
        self.line = line
        self.col = col


class GeneratorEvaluationError(ArithmeticError):
    def __init__(self, subexpr, detail="non-finite value"):
        super().__init__(f"{detail} in subexpression {subexpr!r}")
        self.subexpr = subexpr


# --- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Time:
    pass


@dataclass(frozen=True)
class YVar:
    k: int


@dataclass(frozen=True)
class ZVar:
    k: int
    l: int


@dataclass(frozen=True)
class ThetaVar:
    k: int


@dataclass(frozen=True)
class BVar:
    l: int


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class CE:
    body: object
    slot: int


FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def children(node):
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    if isinstance(node, CE):
        return (node.body,)
    return ()


def walk(node):
    yield node
    for c in children(node):
        yield from walk(c)


@dataclass(frozen=True)
class GeneratorExpr:
    """Parsed generator: one AST per output component."""

    components: tuple
    m: int
    d: int
    source: str = field(default="", compare=False)
    mode: str = "generator"

    @property
    def ce_nodes(self):
        """CE nodes ordered by slot."""
        found = [n for c in self.components for n in walk(c) if isinstance(n, CE)]
        return sorted(found, key=lambda n: n.slot)

    @property
    def n_ce(self):
        return len(self.ce_nodes)

    def uses(self, cls):
        return any(isinstance(n, cls) for c in self.components for n in walk(c))

    @property
    def uses_theta_outside_ce(self):
        def outside(node):
            if isinstance(node, CE):
                return False
            if isinstance(node, ThetaVar):
                return True
            return any(outside(c) for c in children(node))

        return any(outside(c) for c in self.components)

    @property
    def anticipation_free(self):
        return not (self.uses(CE) or self.uses(ThetaVar))

    def __str__(self):
        return to_text(self)


# --- lexer / parser ----------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|"
    r"(?P<name>[A-Za-z_][A-Za-z_0-9]*)|"
    r"(?P<op>[-+*/();,\[\]])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    pos, line, line_start = 0, 1, 0
    out = []
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = mt.lastgroup
        if kind == "nl":
            line += 1
            line_start = mt.end()
        elif kind != "ws":
            out.append(_Tok(kind, mt.group(), line, mt.start() - line_start + 1))
        pos = mt.end()
    out.append(_Tok("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text, mode):
        self.toks = _tokenize(text)
        self.i = 0
        self.mode = mode
        self.slot = 0
        self.in_ce = False

    @property
    def cur(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.cur
        raise ParseError(msg, tok.line, tok.col)

    def accept(self, text):
        if self.cur.kind == "op" and self.cur.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.cur.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")

    def program(self):
        comps = [self.sum()]
        while self.accept(";"):
            if self.cur.kind == "eof":
                break
            comps.append(self.sum())
        if self.cur.kind != "eof":
            self.error(f"unexpected {self.cur.text!r}")
        return comps

    def sum(self):
        node = self.product()
        while self.cur.kind == "op" and self.cur.text in "+-":
            op = self.cur.text
            self.i += 1
            node = BinOp(op, node, self.product())
        return node

    def product(self):
        node = self.unary()
        while self.cur.kind == "op" and self.cur.text in "*/":
            op = self.cur.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.atom()

    def index(self):
        self.expect("[")
        tok = self.cur
        if tok.kind != "num" or not tok.text.isdigit():
            self.error("expected a positive integer index")
        self.i += 1
        self.expect("]")
        k = int(tok.text)
        if k < 1:
            self.error("indices start at 1", tok)
        return k

    def atom(self):
        tok = self.cur
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if self.accept("("):
            node = self.sum()
            self.expect(")")
            return node
        if tok.kind != "name":
            self.error(f"unexpected {tok.text or 'end of input'!r}")
        self.i += 1
        name = tok.text
        if name == "t":
            return Time()
        if self.mode == "generator":
            if name == "y":
                self._no_state_in_ce(tok)
                return YVar(self.index())
            if name == "z":
                self._no_state_in_ce(tok)
                k = self.index()
                return ZVar(k, self.index())
            if name == "theta":
                return ThetaVar(self.index())
            if name == "CE":
                if self.in_ce:
                    self.error("nested CE is not allowed", tok)
                self.expect("(")
                self.in_ce = True
                body = self.sum()
                self.in_ce = False
                self.expect(")")
                node = CE(body, self.slot)
                self.slot += 1
                return node
        elif name == "b":
            return BVar(self.index())
        if name in FUNCTIONS:
            arity, _ = FUNCTIONS[name]
            self.expect("(")
            args = [self.sum()]
            while self.accept(","):
                args.append(self.sum())
            self.expect(")")
            if len(args) != arity:
                self.error(f"{name} takes {arity} argument(s), got {len(args)}", tok)
            return Call(name, tuple(args))
        self.error(f"unknown identifier {name!r}", tok)

    def _no_state_in_ce(self, tok):
        if self.in_ce:
            self.error(f"{tok.text!r} may not appear inside CE", tok)


def parse(text, m=None, d=None, mode="generator"):
    """Parse ``text`` into a :class:`GeneratorExpr`.

    ``m`` defaults to the number of ``;``-separated components and ``d`` to
    the largest ``z`` column (or ``b`` index) referenced, at least 1.
    """
    if mode not in ("generator", "terminal"):
        raise ValueError(f"unknown mode {mode!r}")
    p = _Parser(text, mode)
    comps = p.program()
    m_eff = len(comps) if m is None else m
    if m is not None and len(comps) != m:
        raise ParseError(f"expected {m} component(s), got {len(comps)}", 1, 1)
    max_l = 1
    for c in comps:
        for n in walk(c):
            if isinstance(n, (YVar, ThetaVar)) and n.k > m_eff:
                raise ParseError(f"index {n.k} out of bounds for m={m_eff}", 1, 1)
            if isinstance(n, ZVar):
                if n.k > m_eff:
                    raise ParseError(f"row index {n.k} out of bounds for m={m_eff}", 1, 1)
                max_l = max(max_l, n.l)
            if isinstance(n, BVar):
                max_l = max(max_l, n.l)
    if d is not None and max_l > d:
        raise ParseError(f"column index {max_l} out of bounds for d={d}", 1, 1)
    return GeneratorExpr(tuple(comps), m_eff, d or max_l, text, mode)


# --- printing ----------------------------------------------------------------


def _fmt_num(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def node_text(node, parent_prec=0, right=False):
    if isinstance(node, Num):
        s = _fmt_num(node.value)
        return f"({s})" if node.value < 0 else s
    if isinstance(node, Time):
        return "t"
    if isinstance(node, YVar):
        return f"y[{node.k}]"
    if isinstance(node, ZVar):
        return f"z[{node.k}][{node.l}]"
    if isinstance(node, ThetaVar):
        return f"theta[{node.k}]"
    if isinstance(node, BVar):
        return f"b[{node.l}]"
    if isinstance(node, Neg):
        return "-" + node_text(node.operand, 3)
    if isinstance(node, Call):
        return f"{node.name}({', '.join(node_text(a) for a in node.args)})"
    if isinstance(node, CE):
        return f"CE({node_text(node.body)})"
    prec = _PREC[node.op]
    s = f"{node_text(node.left, prec)} {node.op} {node_text(node.right, prec, True)}"
    if prec < parent_prec or (right and prec == parent_prec):
        return f"({s})"
    return s


def to_text(expr):
    return "; ".join(node_text(c) for c in expr.components)


# --- evaluation --------------------------------------------------------------


class _Env:
    __slots__ = ("t", "y", "z", "theta", "ce", "b")

    def __init__(self, t=0.0, y=None, z=None, theta=None, ce=None, b=None):
        self.t, self.y, self.z, self.theta, self.ce, self.b = t, y, z, theta, ce, b


def _need(arr, what):
    if arr is None:
        raise ValueError(f"expression needs {what} but none was supplied")
    return arr


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Time):
        return env.t
    if isinstance(node, YVar):
        return _need(env.y, "y")[..., node.k - 1]
    if isinstance(node, ZVar):
        return _need(env.z, "z")[..., node.k - 1, node.l - 1]
    if isinstance(node, ThetaVar):
        return _need(env.theta, "theta")[..., node.k - 1]
    if isinstance(node, BVar):
        return _need(env.b, "b")[..., node.l - 1]
    if isinstance(node, CE):
        if env.ce is None:
            return _eval(node.body, env)
        return env.ce[..., node.slot]
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        return FUNCTIONS[node.name][1](*(_eval(a, env) for a in node.args))
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    return np.divide(a, b)


def _find_nonfinite(node, env):
    for c in children(node):
        bad = _find_nonfinite(c, env)
        if bad is not None:
            return bad
    if isinstance(node, CE) and env.ce is not None:
        return None
    if not np.all(np.isfinite(_eval(node, env))):
        return node
    return None


def _batch_shape(env):
    shapes = [np.shape(env.t)]
    for arr, trail in ((env.y, 1), (env.z, 2), (env.theta, 1), (env.ce, 1), (env.b, 1)):
        if arr is not None:
            shapes.append(arr.shape[: arr.ndim - trail])
    return np.broadcast_shapes(*shapes)


def _evaluate_components(expr, env):
    with np.errstate(all="ignore"):
        parts = [np.asarray(_eval(c, env), dtype=np.float64) for c in expr.components]
        shape = np.broadcast_shapes(_batch_shape(env), *(p.shape for p in parts))
        out = np.stack([np.broadcast_to(p, shape) for p in parts], axis=-1)
        if not np.all(np.isfinite(out)):
            for c in expr.components:
                bad = _find_nonfinite(c, env)
                if bad is not None:
                    raise GeneratorEvaluationError(node_text(bad))
    return out


def evaluate(expr, t, y=None, z=None, ce_values=None, theta=None):
    """Evaluate all components; returns an array with trailing axis ``m``.

    Inputs broadcast: ``y[..., m]``, ``z[..., m, d]``, ``theta[..., m]``,
    ``ce_values[..., n_ce]``. CE nodes read ``ce_values``; when
    ``ce_values`` is None they are evaluated pointwise at ``theta`` (the
    deterministic-theta reading).
    """
    if ce_values is not None:
        ce_values = np.asarray(ce_values, dtype=np.float64)
        if ce_values.shape[-1] != expr.n_ce:
            raise ValueError(f"expected {expr.n_ce} CE value(s), got {ce_values.shape[-1]}")
    env = _Env(t, _arr(y), _arr(z), _arr(theta), ce_values)
    return _evaluate_components(expr, env)


def evaluate_terminal(expr, t, b):
    """Evaluate a terminal-mode expression at time ``t`` with Brownian values ``b[..., d]``."""
    return _evaluate_components(expr, _Env(t=t, b=_arr(b)))


def evaluate_ce_bodies(expr, t, theta):
    """Values of every CE body at ``theta``; trailing axis indexed by slot."""
    env = _Env(t=t, theta=_arr(theta))
    nodes = expr.ce_nodes
    with np.errstate(all="ignore"):
        vals = [np.asarray(_eval(n.body, env), dtype=np.float64) for n in nodes]
        if not vals:
            return np.zeros(np.shape(theta)[:-1] + (0,))
        shape = np.broadcast_shapes(*(v.shape for v in vals))
        out = np.stack([np.broadcast_to(v, shape) for v in vals], axis=-1)
        if not np.all(np.isfinite(out)):
            for n in nodes:
                bad = _find_nonfinite(n.body, env)
                if bad is not None:
                    raise GeneratorEvaluationError(node_text(bad))
    return out


def _arr(x):
    return None if x is None else np.asarray(x, dtype=np.float64)


# --- hypothesis constants ----------------------------------------------------


def _draw(rng, lo, hi, size):
    return rng.uniform(lo, hi, size=size)


def estimate_lipschitz(
    expr, box=None, samples=10_000, seed=0, t_range=(0.0, 1.0)
):
    """Sampled lower bound on the Lipschitz constant in ``(y, z, theta)``.

    ``box`` maps ``"y"``, ``"z"``, ``"theta"`` to ``(lo, hi)`` ranges. Half
    of the pairs are independent points, the rest perturb a single
    coordinate by a log-uniform step, which is what resolves local slopes.
    CE nodes are evaluated at the sampled theta. Norms are Euclidean
    (Frobenius for z) as in the Lipschitz condition on generators.
    """
    box = dict(box or {})
    yr = box.get("y", (-3.0, 3.0))
    zr = box.get("z", (-3.0, 3.0))
    tr = box.get("theta", (-3.0, 3.0))
    m, d = expr.m, expr.d
    rng = np.random.default_rng(seed)
    n = int(samples)
    t = rng.uniform(*t_range, size=n)
    y = _draw(rng, *yr, (n, m))
    z = _draw(rng, *zr, (n, m, d))
    th = _draw(rng, *tr, (n, m))
    y2, z2, th2 = y.copy(), z.copy(), th.copy()

    half = n // 2
    y2[:half] = _draw(rng, *yr, (half, m))
    z2[:half] = _draw(rng, *zr, (half, m, d))
    th2[:half] = _draw(rng, *tr, (half, m))

    n_coord = m + m * d + m
    rest = np.arange(half, n)
    which = rng.integers(0, n_coord, size=rest.size)
    step = 10.0 ** rng.uniform(-6, -1, size=rest.size)
    sign = rng.choice([-1.0, 1.0], size=rest.size)
    for r, w, s, sg in zip(rest, which, step, sign):
        if w < m:
            y2[r, w] += sg * s * (yr[1] - yr[0])
        elif w < m + m * d:
            q = w - m
            z2[r, q // d, q % d] += sg * s * (zr[1] - zr[0])
        else:
            th2[r, w - m - m * d] += sg * s * (tr[1] - tr[0])

    f1 = evaluate(expr, t, y, z, None, th)
    f2 = evaluate(expr, t, y2, z2, None, th2)
    num = np.linalg.norm(f1 - f2, axis=-1)
    den = (
        np.linalg.norm(y - y2, axis=-1)
        + np.linalg.norm((z - z2).reshape(n, -1), axis=-1)
        + np.linalg.norm(th - th2, axis=-1)
    )
    ok = den > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(num[ok] / den[ok]))


@dataclass
class HypothesisReport:
    sup_at_zero: float
    integral_sq_at_zero: float
    finite: bool
    offending_time: float | None
    h4: bool
    h4_prime: bool
    h2: bool
    lipschitz_estimate: float | None
    unverified: tuple = ("H3: continuity in time is assumed, not checked",)

    def summary(self):
        lines = [
            f"sup_s |f(s,0,0,0)| = {self.sup_at_zero:.6g}",
            f"int_0^T |f(s,0,0,0)|^2 ds = {self.integral_sq_at_zero:.6g}",
            f"H4 (deterministic sup finite): {'pass' if self.h4 else 'fail'}",
            f"H2 (implied by H4): {'pass' if self.h2 else 'fail'}",
            f"H4' (from H1 + H4): {'pass' if self.h4_prime else 'fail'}",
        ]
        if self.offending_time is not None:
            lines.append(f"non-finite at t = {self.offending_time:g}")
        lines.extend(f"unverified: {u}" for u in self.unverified)
        return "\n".join(lines)


def validate_hypotheses(expr, times, lipschitz=None):
    """Evaluate ``f(s, 0, 0, 0)`` over ``times`` and derive H4 => H2 and H1 + H4 => H4'.

    ``times`` is an array of grid times on [0, T] (or a :class:`TimeGrid`).
    """
    if hasattr(times, "n_main"):
        times = times.times[: times.n_main + 1]
    times = np.asarray(times, dtype=np.float64)
    m, d = expr.m, expr.d
    n = times.size
    zero_y = np.zeros((n, m))
    zero_z = np.zeros((n, m, d))
    with np.errstate(all="ignore"):
        env = _Env(times, zero_y, zero_z, zero_y, None)
        vals = np.stack(
            [np.broadcast_to(np.asarray(_eval(c, env), dtype=float), (n,)) for c in expr.components],
            axis=-1,
        )
    norms = np.linalg.norm(vals, axis=-1)
    finite_mask = np.isfinite(norms)
    finite = bool(finite_mask.all())
    offending = None if finite else float(times[np.argmin(finite_mask)])
    sup = float(np.max(norms)) if finite else math.inf
    integral = float(np.trapezoid(norms**2, times)) if finite and n > 1 else (0.0 if finite else math.inf)
    h4 = finite
    h1 = lipschitz is None or math.isfinite(lipschitz)
    return HypothesisReport(
        sup_at_zero=sup,
        integral_sq_at_zero=integral,
        finite=finite,
        offending_time=offending,
        h4=h4,
        h4_prime=bool(h4 and h1),
        h2=h4,
        lipschitz_estimate=lipschitz,
    )
