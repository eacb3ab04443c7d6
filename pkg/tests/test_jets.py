from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tanapprox.expr import DomainError, evaluate, parse
from tanapprox.jets import (
    TruncatedSeries,
    grlex_key,
    maclaurin,
    monomials,
    series_from_json,
    series_to_json,
    taylor,
    to_map,
)


def test_monomial_order_and_count():
    mons = monomials(3, 3)
    assert len(mons) == 20
    assert mons[:4] == ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))
    assert sorted(mons, key=grlex_key) == list(mons)


def test_sin_cone_truncations():
    f = parse("x1^2 + x2^2 - sin(x3)^2", 3)
    t3 = taylor(f, 3)[0]
    assert t3.terms == {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): -1.0}
    t5 = taylor(f, 5)[0]
    assert t5[(0, 0, 4)] == pytest.approx(1 / 3, rel=1e-15)
    assert taylor(f, 4)[0].terms == t5.terms  # sin^2 is even: T^4 f = T^5 f


def test_polynomial_is_a_fixed_point():
    f = parse("x1^2 + x2^2 - x3^2", 3)
    for k in range(2, 6):
        assert to_map(taylor(f, k)).source == "x1^2 + x2^2 - x3^2"


def test_tan_recurrence_table():
    assert list(maclaurin("tan", 9))[9] == Fraction(62, 2835)


def test_sqrt1p_binomial_coefficients():
    c = maclaurin("sqrt1p", 8)
    for j in range(8):
        assert c[j + 1] == c[j] * (Fraction(1, 2) - j) / (j + 1)


def test_reciprocal_needs_constant_term():
    s = TruncatedSeries.variable(2, 4, 0)
    with pytest.raises(DomainError):
        s.reciprocal()
    one_plus = (s + 1.0).reciprocal()
    assert [one_plus[(j, 0)] for j in range(5)] == [1.0, -1.0, 1.0, -1.0, 1.0]


def test_series_is_immutable_and_canonical():
    s = TruncatedSeries(2, 2, {(1, 0): 1.0, (0, 1): 0.0, (2, 1): 5.0})
    assert s.terms == {(1, 0): 1.0}
    with pytest.raises(AttributeError):
        s.order = 3


def test_json_roundtrip_is_byte_stable():
    series = taylor(parse("exp(x1) - 1; sin(x2*x1)", 2), 4)
    text = series_to_json(series)
    assert series_from_json(text) == series
    assert series_to_json(series_from_json(text)) == text


def test_truncation_approximates_function():
    f = parse("log(1 + x1 + x2) * cos(x2)", 2)
    g = to_map(taylor(f, 6))
    x = np.array([0.01, -0.02])
    assert abs(evaluate(f, x)[0] - evaluate(g, x)[0]) < 1e-12


COEF = st.floats(-3, 3, allow_nan=False).map(lambda v: round(v, 3))


def _series(n=2, order=4):
    exps = st.sampled_from(monomials(n, order))
    return st.dictionaries(exps, COEF, max_size=8).map(lambda d: TruncatedSeries(n, order, d))


@settings(max_examples=50, deadline=None)
@given(_series(), _series(), _series())
def test_ring_laws(a, b, c):
    assert a + b == b + a
    lhs, rhs = (a * b) * c, a * (b * c)
    for e in monomials(2, 4):
        assert lhs[e] == pytest.approx(rhs[e], abs=1e-9)
    dist = a * (b + c) - (a * b + a * c)
    assert all(abs(v) < 1e-9 for v in dist.terms.values())


@settings(max_examples=40, deadline=None)
@given(_series(), st.integers(0, 4))
def test_truncate_commutes_with_product(a, j):
    b = TruncatedSeries(2, 4, {(1, 1): 2.0, (0, 0): 1.0, (3, 0): -1.0})
    lhs = (a * b).truncate(j)
    rhs = a.truncate(j) * b.truncate(j)
    for e in monomials(2, j):
        assert lhs[e] == pytest.approx(rhs[e], abs=1e-12)
