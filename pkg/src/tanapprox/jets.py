"""Truncated multivariate power series and Taylor truncation of analytic maps.

A :class:`TruncatedSeries` stores the coefficients of a polynomial in
``x1..xn`` of total degree <= ``order`` as a sparse mapping from exponent
tuples to floats, kept in graded-lex order (degree ascending, then
lexicographically descending exponents: ``x1^2, x1*x2, x2^2, ...``).

Elementary functions are composed by splitting ``g = g(O) + u`` and using
addition formulas, so only Maclaurin tables in ``u`` are needed.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .expr import (
    CONSTANTS,
    AnalyticMap,
    BinOp,
    Const,
    DomainError,
    Func,
    Neg,
    Num,
    Pow,
    Var,
    from_components,
)

__all__ = [
    "TruncatedSeries",
    "maclaurin",
    "series_mul",
    "taylor",
    "to_map",
    "series_to_json",
    "series_from_json",
]


def grlex_key(exp):
    return (sum(exp), tuple(-e for e in exp))


@lru_cache(maxsize=64)
def monomials(n, order):
    """All exponent tuples of degree <= order, indexed by graded-lex rank."""

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    out = []
    for d in range(order + 1):
        out.extend(compositions(d, n))
    return tuple(out)


class TruncatedSeries:
    """Immutable sparse truncated power series in ``arity`` variables."""

    __slots__ = ("arity", "order", "_terms")

    def __init__(self, arity: int, order: int, terms: Mapping | Iterable = ()):
        if arity < 1 or order < 0:
            raise ValueError(f"bad series shape (arity={arity}, order={order})")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc = {}
        for exp, coef in items:
            exp = tuple(int(e) for e in exp)
            if len(exp) != arity or min(exp) < 0:
                raise ValueError(f"exponent {exp} does not fit arity {arity}")
            if sum(exp) > order:
                continue
            acc[exp] = acc.get(exp, 0.0) + float(coef)
        object.__setattr__(self, "arity", arity)
        object.__setattr__(self, "order", order)
        object.__setattr__(
            self,
            "_terms",
            {e: acc[e] for e in sorted(acc, key=grlex_key) if acc[e] != 0.0},
        )

    def __setattr__(self, name, value):
        raise AttributeError("TruncatedSeries is immutable")

    @classmethod
    def constant(cls, arity, order, value):
        return cls(arity, order, {(0,) * arity: value})

    @classmethod
    def variable(cls, arity, order, index):
        exp = [0] * arity
        exp[index] = 1
        return cls(arity, order, {tuple(exp): 1.0})

    @classmethod
    def _from_dense(cls, arity, order, dense):
        mons = monomials(arity, order)
        nz = np.flatnonzero(dense)
        obj = cls.__new__(cls)
        object.__setattr__(obj, "arity", arity)
        object.__setattr__(obj, "order", order)
        object.__setattr__(obj, "_terms", {mons[i]: float(dense[i]) for i in nz})
        return obj

    @property
    def terms(self):
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __getitem__(self, exp):
        return self._terms.get(tuple(exp), 0.0)

    @property
    def const(self):
        return self._terms.get((0,) * self.arity, 0.0)

    @property
    def degree(self):
        return max((sum(e) for e in self._terms), default=-1)

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return (self.arity, self.order, self._terms) == (other.arity, other.order, other._terms)

    __hash__ = None

    def __repr__(self):
        return f"TruncatedSeries(arity={self.arity}, order={self.order}, terms={self._terms})"

    # -------------------------------------------------------- arithmetic

    def _check(self, other):
        if self.arity != other.arity:
            raise ValueError(f"arity mismatch: {self.arity} vs {other.arity}")

    def truncate(self, order):
        return TruncatedSeries(self.arity, order, self._terms)

    def __add__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self + TruncatedSeries.constant(self.arity, self.order, other)
        self._check(other)
        acc = dict(self._terms)
        for e, c in other._terms.items():
            acc[e] = acc.get(e, 0.0) + c
        return TruncatedSeries(self.arity, min(self.order, other.order), acc)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(self.arity, self.order, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, factor):
        factor = float(factor)
        if factor == 1.0:
            return self
        return TruncatedSeries(self.arity, self.order, {e: factor * c for e, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries):
            return series_mul(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("series power needs a non-negative integer")
        result = TruncatedSeries.constant(self.arity, self.order, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def nonconstant(self):
        zero = (0,) * self.arity
        return TruncatedSeries(self.arity, self.order, {e: c for e, c in self._terms.items() if e != zero})

    def compose_univariate(self, coeffs):
        """sum_j coeffs[j] * self**j; requires a zero constant term."""
        if self.const != 0.0:
            raise ValueError("univariate composition needs a series without constant term")
        coeffs = list(coeffs)[: self.order + 1]
        result = TruncatedSeries.constant(self.arity, self.order, coeffs[-1] if coeffs else 0.0)
        for c in reversed(coeffs[:-1]):
            result = result * self + c
        return result

    def reciprocal(self):
        a = self.const
        if a == 0.0:
            raise DomainError("reciprocal of a series with zero constant term")
        u = self.nonconstant().scale(-1.0 / a)
        return u.compose_univariate([1.0] * (self.order + 1)).scale(1.0 / a)

    # -------------------------------------------------------- evaluation

    def __call__(self, x):
        X = np.asarray(x, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for exp, c in self._terms.items():
            term = np.full(X.shape[0], c)
            for i, e in enumerate(exp):
                if e:
                    term = term * X[:, i] ** e
            out = out + term
        return out[0] if single else out

    def to_dict(self):
        return {
            "arity": self.arity,
            "order": self.order,
            "terms": [{"exp": list(e), "coef": c} for e, c in self._terms.items()],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["arity"], data["order"], {tuple(t["exp"]): t["coef"] for t in data["terms"]})


def series_mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Exact truncated product at order ``min(a.order, b.order)``."""
    if a.arity != b.arity:
        raise ValueError(f"arity mismatch: {a.arity} vs {b.arity}")
    order = min(a.order, b.order)
    n = a.arity
    if not a._terms or not b._terms:
        return TruncatedSeries(n, order)
    ea = np.array(list(a._terms), dtype=np.int_).reshape(-1, n)
    eb = np.array(list(b._terms), dtype=np.int_).reshape(-1, n)
    ca = np.fromiter(a._terms.values(), dtype=np.float64, count=len(a._terms))
    cb = np.fromiter(b._terms.values(), dtype=np.float64, count=len(b._terms))
    dense = kernels.series_mul(ea, ca, eb, cb, order)
    return TruncatedSeries._from_dense(n, order, dense)


# ---------------------------------------------------------------- Maclaurin tables


def _factorial(j):
    return Fraction(math.factorial(j))


@lru_cache(maxsize=None)
def maclaurin(name, order):
    """Exact Maclaurin coefficients (as Fractions) of the univariate kernel ``name``.

    Kernels: sin, cos, exp, sinh, cosh, atan, tan (series in u), log1p, sqrt1p
    (series of log(1+u), sqrt(1+u)).
    """
    k = order
    c = [Fraction(0)] * (k + 1)
    if name == "exp":
        c = [1 / _factorial(j) for j in range(k + 1)]
    elif name in ("sin", "sinh"):
        for j in range(1, k + 1, 2):
            sign = -1 if (name == "sin" and (j // 2) % 2) else 1
            c[j] = sign / _factorial(j)
    elif name in ("cos", "cosh"):
        for j in range(0, k + 1, 2):
            sign = -1 if (name == "cos" and (j // 2) % 2) else 1
            c[j] = sign / _factorial(j)
    elif name == "atan":
        for j in range(1, k + 1, 2):
            c[j] = Fraction((-1) ** (j // 2), j)
    elif name == "log1p":
        for j in range(1, k + 1):
            c[j] = Fraction((-1) ** (j + 1), j)
    elif name == "sqrt1p":
        term = Fraction(1)
        for j in range(k + 1):
            c[j] = term
            term = term * (Fraction(1, 2) - j) / (j + 1)
    elif name == "tan":
        # t' = 1 + t^2
        for m in range(k):
            conv = sum((c[i] * c[m - i] for i in range(m + 1)), Fraction(0))
            c[m + 1] = ((1 if m == 0 else 0) + conv) / (m + 1)
    else:
        raise KeyError(f"no Maclaurin table for {name!r}")
    return tuple(c)


def _table(name, order):
    return [float(v) for v in maclaurin(name, order)]


def _lin(*pairs):
    """sum of scalar * series, skipping zero scalars (keeps exact zeros exact)."""
    total = None
    for s, ser in pairs:
        if s == 0.0:
            continue
        term = ser.scale(s)
        total = term if total is None else total + term
    return total


def _func_series(name, g):
    n, k = g.arity, g.order
    a = g.const
    u = g.nonconstant()

    def table(kernel):
        return u.compose_univariate(_table(kernel, k))

    zero = TruncatedSeries(n, k)
    if name == "exp":
        return table("exp").scale(math.exp(a))
    if name in ("sin", "cos"):
        S, C = table("sin"), table("cos")
        sa, ca = math.sin(a), math.cos(a)
        if name == "sin":
            out = _lin((sa, C), (ca, S))
        else:
            out = _lin((ca, C), (-sa, S))
        return out if out is not None else zero
    if name in ("sinh", "cosh"):
        S, C = table("sinh"), table("cosh")
        sa, ca = math.sinh(a), math.cosh(a)
        if name == "sinh":
            out = _lin((sa, C), (ca, S))
        else:
            out = _lin((ca, C), (sa, S))
        return out if out is not None else zero
    if name == "log":
        if not a > 0.0:
            raise DomainError(f"log: constant term {a} is not positive")
        return u.scale(1.0 / a).compose_univariate(_table("log1p", k)) + math.log(a)
    if name == "sqrt":
        if not a > 0.0:
            raise DomainError(f"sqrt: constant term {a} is not positive (not analytic)")
        return u.scale(1.0 / a).compose_univariate(_table("sqrt1p", k)).scale(math.sqrt(a))
    if name == "atan":
        if a == 0.0:
            return table("atan")
        # atan(a+u) = atan(a) + atan(u / (1 + a^2 + a u))
        denom = u.scale(a) + (1.0 + a * a)
        w = u * denom.reciprocal()
        return w.compose_univariate(_table("atan", k)) + math.atan(a)
    if name == "tan":
        if math.cos(a) == 0.0:
            raise DomainError("tan: pole at constant term")
        T = table("tan")
        if a == 0.0:
            return T
        ta = math.tan(a)
        return (T + ta) * (1.0 - T.scale(ta)).reciprocal()
    raise KeyError(name)


def _series(node, n, k):
    if isinstance(node, Num):
        return TruncatedSeries.constant(n, k, node.value)
    if isinstance(node, Const):
        return TruncatedSeries.constant(n, k, CONSTANTS[node.name])
    if isinstance(node, Var):
        return TruncatedSeries.variable(n, k, node.index)
    if isinstance(node, Neg):
        return -_series(node.arg, n, k)
    if isinstance(node, BinOp):
        a = _series(node.left, n, k)
        b = _series(node.right, n, k)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a * b.reciprocal()
    if isinstance(node, Pow):
        return _series(node.base, n, k) ** node.exponent
    if isinstance(node, Func):
        return _func_series(node.name, _series(node.arg, n, k))
    raise TypeError(f"unknown node {node!r}")


def taylor(f: AnalyticMap, k: int) -> list[TruncatedSeries]:
    """Degree-<=k Taylor polynomial at the origin of every component of ``f``."""
    if k < 0:
        raise ValueError("truncation order must be non-negative")
    return [_series(c, f.arity, k) for c in f.components]


def _monomial_node(exp):
    node = None
    for i, e in enumerate(exp):
        if e == 0:
            continue
        factor = Var(i) if e == 1 else Pow(Var(i), e)
        node = factor if node is None else BinOp("*", node, factor)
    return node


def _series_node(series):
    node = None
    for exp, c in series.items():
        mono = _monomial_node(exp)
        mag = abs(c)
        if mono is None:
            term = Num(mag)
        elif mag == 1.0:
            term = mono
        else:
            term = BinOp("*", Num(mag), mono)
        if node is None:
            node = Neg(term) if c < 0 else term
        else:
            node = BinOp("-" if c < 0 else "+", node, term)
    return node if node is not None else Num(0.0)


def to_map(series: list[TruncatedSeries]) -> AnalyticMap:
    """Polynomial :class:`AnalyticMap` with the same coefficients.

    An all-zero series becomes the literal ``0`` component; check
    ``AnalyticMap.is_zero`` for the degenerate case.
    """
    if not series:
        raise ValueError("to_map needs at least one series")
    n = series[0].arity
    if any(s.arity != n for s in series):
        raise ValueError("all series must share the same arity")
    return from_components([_series_node(s) for s in series], n)


def series_to_json(series: list[TruncatedSeries]) -> str:
    """Byte-stable JSON; a single series serialises as one object."""
    data = [s.to_dict() for s in series]
    payload = data[0] if len(data) == 1 else data
    return json.dumps(payload, separators=(",", ":"))


def series_from_json(text: str) -> list[TruncatedSeries]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    return [TruncatedSeries.from_dict(d) for d in data]
