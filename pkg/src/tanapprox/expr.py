"""Small expression language for analytic maps R^n -> R^p.

Maps are written as ``;``-separated components over variables ``x1..xn``
(aliases ``x, y, z, w`` for n <= 4)::

    >>> f = parse("x^2 + y^2 - sin(z)^2", 3)
    >>> f([0.0, 0.0, math.pi / 2])
    array([-1.])

Evaluation and forward-mode differentiation are vectorised over a leading
batch axis: ``x`` may have shape ``(n,)`` or ``(N, n)``.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "AnalyticMap",
    "AnalyticityError",
    "ArityError",
    "DomainError",
    "ExprError",
    "ParseError",
    "UnknownIdentifierError",
    "evaluate",
    "jacobian",
    "parse",
    "unparse",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "atan")
CONSTANTS = {"pi": math.pi, "e": math.e}
ALIASES = {"x": 1, "y": 2, "z": 3, "w": 4}


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message, pos=None, source=None):
        self.pos = pos
        self.source = source
        if pos is not None and source is not None:
            message = f"{message} at position {pos}\n  {source}\n  {' ' * pos}^"
        elif pos is not None:
            message = f"{message} at position {pos}"
        super().__init__(message)


class UnknownIdentifierError(ParseError):
    pass


class ArityError(ParseError):
    pass


class AnalyticityError(ExprError):
    """Component is not analytic at the origin."""


class DomainError(ExprError, ArithmeticError):
    """log/sqrt/division evaluated outside its domain."""


# ---------------------------------------------------------------- AST nodes


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Node"


Node = Union[Num, Const, Var, Neg, BinOp, Pow, Func]


# ---------------------------------------------------------------- tokenizer

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^();])"
    r")"
)


def _tokenize(source):
    tokens = []
    pos = 0
    end = len(source.rstrip())
    while pos < end:
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[bad]!r}", bad, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source, arity):
        self.source = source
        self.arity = arity
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.advance()
        if text != value or kind not in ("op",):
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos, self.source)

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, tok[2], self.source)

    def parse_map(self):
        comps = [self.parse_expr()]
        while self.peek()[1] == ";" and self.peek()[0] == "op":
            self.advance()
            comps.append(self.parse_expr())
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return comps

    def parse_expr(self):
        node = self.parse_term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.parse_factor())
        return node

    def parse_factor(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.parse_factor())
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            kind, text, pos = self.advance()
            if kind != "num" or not text.isdigit():
                raise ParseError("exponent must be a non-negative integer literal", pos, self.source)
            return Pow(base, int(text))
        return base

    def parse_atom(self):
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        if kind == "ident":
            if text in FUNCTIONS:
                if not (self.peek()[0] == "op" and self.peek()[1] == "("):
                    raise self.error(f"expected '(' after function {text!r}")
                self.advance()
                arg = self.parse_expr()
                self.expect(")")
                return Func(text, arg)
            if text in CONSTANTS:
                return Const(text)
            return Var(self._variable(text, pos))
        if kind == "end":
            raise ParseError("unexpected end of input", pos, self.source)
        raise ParseError(f"unexpected token {text!r}", pos, self.source)

    def _variable(self, text, pos):
        m = re.fullmatch(r"x(\d+)", text)
        if m:
            index = int(m.group(1))
            if index < 1:
                raise UnknownIdentifierError(f"unknown identifier {text!r}", pos, self.source)
        elif text in ALIASES and self.arity <= 4:
            index = ALIASES[text]
        else:
            raise UnknownIdentifierError(f"unknown identifier {text!r}", pos, self.source)
        if index > self.arity:
            raise ArityError(
                f"variable {text!r} (index {index}) exceeds arity n={self.arity}", pos, self.source
            )
        return index - 1


# ---------------------------------------------------------------- evaluation


def _domain(ok, what):
    if not np.all(ok):
        raise DomainError(what)


def _eval(node, X):
    if isinstance(node, Num):
        return np.full(X.shape[0], node.value)
    if isinstance(node, Const):
        return np.full(X.shape[0], CONSTANTS[node.name])
    if isinstance(node, Var):
        return X[:, node.index].copy()
    if isinstance(node, Neg):
        return -_eval(node.arg, X)
    if isinstance(node, BinOp):
        a = _eval(node.left, X)
        b = _eval(node.right, X)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        _domain(b != 0.0, "division by zero")
        return a / b
    if isinstance(node, Pow):
        return _eval(node.base, X) ** node.exponent
    u = _eval(node.arg, X)
    name = node.name
    if name == "log":
        _domain(u > 0.0, "log of non-positive value")
        return np.log(u)
    if name == "sqrt":
        _domain(u >= 0.0, "sqrt of negative value")
        return np.sqrt(u)
    return _UFUNC[name](u)


_UFUNC = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "atan": np.arctan,
}


def _dual(node, X):
    """Value and gradient (forward mode); gradient has shape (N, n)."""
    N, n = X.shape
    if isinstance(node, (Num, Const)):
        return _eval(node, X), np.zeros((N, n))
    if isinstance(node, Var):
        g = np.zeros((N, n))
        g[:, node.index] = 1.0
        return X[:, node.index].copy(), g
    if isinstance(node, Neg):
        v, g = _dual(node.arg, X)
        return -v, -g
    if isinstance(node, BinOp):
        a, ga = _dual(node.left, X)
        b, gb = _dual(node.right, X)
        if node.op == "+":
            return a + b, ga + gb
        if node.op == "-":
            return a - b, ga - gb
        if node.op == "*":
            return a * b, ga * b[:, None] + gb * a[:, None]
        _domain(b != 0.0, "division by zero")
        return a / b, (ga * b[:, None] - gb * a[:, None]) / (b * b)[:, None]
    if isinstance(node, Pow):
        v, g = _dual(node.base, X)
        k = node.exponent
        if k == 0:
            return np.ones(N), np.zeros((N, n))
        return v**k, (k * v ** (k - 1))[:, None] * g
    u, gu = _dual(node.arg, X)
    name = node.name
    if name == "sin":
        v, d = np.sin(u), np.cos(u)
    elif name == "cos":
        v, d = np.cos(u), -np.sin(u)
    elif name == "tan":
        v = np.tan(u)
        d = 1.0 + v * v
    elif name == "exp":
        v = np.exp(u)
        d = v
    elif name == "log":
        _domain(u > 0.0, "log of non-positive value")
        v, d = np.log(u), 1.0 / u
    elif name == "sqrt":
        _domain(u > 0.0, "sqrt not differentiable at non-positive value")
        v = np.sqrt(u)
        d = 0.5 / v
    elif name == "sinh":
        v, d = np.sinh(u), np.cosh(u)
    elif name == "cosh":
        v, d = np.cosh(u), np.sinh(u)
    else:  # atan
        v, d = np.arctan(u), 1.0 / (1.0 + u * u)
    return v, d[:, None] * gu


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    if isinstance(node, Num) and math.copysign(1.0, node.value) < 0:
        return 0
    return 5


def _wrap(node, minimum):
    text = _show(node)
    return f"({text})" if _prec(node) < minimum else text


def _show(node):
    if isinstance(node, Num):
        v = node.value
        if not math.isfinite(v):
            raise ExprError(f"cannot print non-finite literal {v}")
        return repr(float(v))
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return "-" + _wrap(node.arg, 4)
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        return f"{_wrap(node.left, p)} {node.op} {_wrap(node.right, p + 1)}"
    if isinstance(node, Pow):
        return f"{_wrap(node.base, 5)}^{node.exponent}"
    return f"{node.name}({_show(node.arg)})"


# ---------------------------------------------------------------- the map


def _as_batch(x, n):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[-1] != n:
        raise ValueError(f"expected points in R^{n}, got shape {np.shape(x)}")
    return X, single


@dataclass(frozen=True)
class AnalyticMap:
    """Parsed analytic map f: R^n -> R^p. Immutable."""

    arity: int
    components: tuple

    @property
    def codim(self):
        return len(self.components)

    p = codim

    @property
    def source(self):
        return unparse(self)

    @property
    def digest(self):
        text = f"{self.arity}|{self.source}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def is_zero(self):
        """True for the degenerate zero map (every component the literal 0)."""
        return all(isinstance(c, Num) and c.value == 0.0 for c in self.components)

    @property
    def vanishes_at_origin(self):
        return bool(np.all(self(np.zeros(self.arity)) == 0.0))

    def __call__(self, x):
        return evaluate(self, x)

    def jacobian(self, x):
        return jacobian(self, x)

    def __str__(self):
        return self.source


def _value_at_origin(node, n):
    return float(_eval(node, np.zeros((1, n)))[0])


def _check_analytic(node, n):
    """Walk the tree and reject operations that are not analytic at O."""
    if isinstance(node, (Num, Const, Var)):
        return
    if isinstance(node, Neg):
        _check_analytic(node.arg, n)
        return
    if isinstance(node, BinOp):
        _check_analytic(node.left, n)
        _check_analytic(node.right, n)
        if node.op == "/" and _value_at_origin(node.right, n) == 0.0:
            raise AnalyticityError(f"denominator {_show(node.right)!r} vanishes at the origin")
        return
    if isinstance(node, Pow):
        _check_analytic(node.base, n)
        return
    _check_analytic(node.arg, n)
    a = _value_at_origin(node.arg, n)
    if node.name in ("log", "sqrt") and not a > 0.0:
        raise AnalyticityError(
            f"{node.name}({_show(node.arg)}) is not analytic at the origin (argument {a})"
        )
    if node.name == "tan" and math.cos(a) == 0.0:
        raise AnalyticityError("tan pole at the origin")


def parse(source: str, arity: int) -> AnalyticMap:
    """Parse ``source`` into an :class:`AnalyticMap` on R^arity."""
    if not isinstance(arity, int) or arity < 1:
        raise ArityError(f"arity must be a positive integer, got {arity!r}")
    comps = _Parser(source, arity).parse_map()
    if len(comps) > arity:
        raise ArityError(f"{len(comps)} components exceed arity n={arity} (need p <= n)")
    for c in comps:
        _check_analytic(c, arity)
    return AnalyticMap(arity, tuple(comps))


def from_components(components: Sequence[Node], arity: int) -> AnalyticMap:
    comps = tuple(components)
    for c in comps:
        _check_analytic(c, arity)
    return AnalyticMap(arity, comps)


def unparse(f: AnalyticMap) -> str:
    return "; ".join(_show(c) for c in f.components)


def evaluate(f: AnalyticMap, x) -> np.ndarray:
    """Evaluate ``f`` at one point (shape (n,)) or a batch (shape (N, n))."""
    X, single = _as_batch(x, f.arity)
    with np.errstate(all="ignore"):
        out = np.stack([_eval(c, X) for c in f.components], axis=-1)
    return out[0] if single else out


def jacobian(f: AnalyticMap, x) -> np.ndarray:
    """Exact Jacobian by forward differentiation; shape (p, n) or (N, p, n)."""
    X, single = _as_batch(x, f.arity)
    with np.errstate(all="ignore"):
        rows = [_dual(c, X)[1] for c in f.components]
    J = np.stack(rows, axis=1)
    return J[0] if single else J


def value_and_jacobian(f: AnalyticMap, x):
    X, single = _as_batch(x, f.arity)
    with np.errstate(all="ignore"):
        duals = [_dual(c, X) for c in f.components]
    F = np.stack([d[0] for d in duals], axis=-1)
    J = np.stack([d[1] for d in duals], axis=1)
    if single:
        return F[0], J[0]
    return F, J
