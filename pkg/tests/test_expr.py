import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tanapprox.expr import (
    AnalyticityError,
    ArityError,
    DomainError,
    ParseError,
    UnknownIdentifierError,
    evaluate,
    jacobian,
    parse,
    unparse,
    value_and_jacobian,
)


def test_cone_value_and_jacobian():
    f = parse("x1^2 + x2^2 - x3^2", 3)
    assert f.codim == 1 and f.arity == 3
    assert evaluate(f, [1.0, 2.0, 3.0])[0] == pytest.approx(-4.0)
    np.testing.assert_allclose(jacobian(f, [1.0, 2.0, 3.0]), [[2.0, 4.0, -6.0]])


def test_batch_shapes():
    f = parse("x1 - x2; x3^2 + sin(x1)", 3)
    X = np.random.default_rng(0).standard_normal((7, 3))
    F, J = value_and_jacobian(f, X)
    assert F.shape == (7, 2) and J.shape == (7, 2, 3)
    np.testing.assert_allclose(F, evaluate(f, X))
    np.testing.assert_allclose(J, jacobian(f, X))


def test_precedence_and_unary_minus():
    f = parse("-x1^2 + 2*x2/4 - -x3", 3)
    assert evaluate(f, [3.0, 2.0, 1.0])[0] == pytest.approx(-9.0 + 1.0 + 1.0)


def test_aliases_only_for_small_arity():
    assert evaluate(parse("x*y + z", 3), [2.0, 3.0, 1.0])[0] == 7.0
    with pytest.raises(UnknownIdentifierError):
        parse("x + x5", 5)


@pytest.mark.parametrize("src, n, exc", [
    ("x1 +", 2, ParseError),
    ("x1 ** 2", 2, ParseError),
    ("foo(x1)", 2, UnknownIdentifierError),
    ("x3", 2, ArityError),
    ("x1; x2; x1 + x2", 2, ArityError),
    ("x1^2.5", 2, ParseError),
    ("log(x1)", 2, AnalyticityError),
    ("sqrt(x1^2)", 2, AnalyticityError),
    ("1/x1", 2, AnalyticityError),
])
def test_rejections(src, n, exc):
    with pytest.raises(exc):
        parse(src, n)


def test_parse_error_reports_position():
    with pytest.raises(ParseError) as info:
        parse("x1 + $", 2)
    assert info.value.pos == 5


def test_domain_errors_raised_away_from_origin():
    f = parse("log(1 + x1)", 1)
    with pytest.raises(DomainError):
        evaluate(f, [-2.0])


def test_jacobian_matches_finite_differences():
    f = parse("exp(x1*x2) - atan(x3); cos(x1 + x3)/(2 + sinh(x2))", 3)
    x = np.array([0.3, -0.2, 0.5])
    J = jacobian(f, x)
    h = 1e-6
    fd = np.column_stack([(evaluate(f, x + h * e) - evaluate(f, x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(J, fd, rtol=1e-7, atol=1e-9)


def test_digest_is_stable_and_source_sensitive():
    a = parse("x1^2 - x2", 2)
    assert a.digest == parse("x1^2-x2", 2).digest
    assert a.digest != parse("x1^2 + x2", 2).digest


def test_vanishes_at_origin_and_zero_map():
    assert parse("sin(x1)", 2).vanishes_at_origin
    assert not parse("cos(x1)", 2).vanishes_at_origin
    assert parse("0", 2).is_zero


LEAVES = st.sampled_from(["x1", "x2", "x3", "2", "0.5", "pi"])


def _expr():
    return st.recursive(
        LEAVES,
        lambda sub: st.one_of(
            st.tuples(sub, st.sampled_from(["+", "-", "*"]), sub).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
            st.tuples(st.sampled_from(["sin", "cos", "exp", "atan"]), sub).map(lambda t: f"{t[0]}({t[1]})"),
            sub.map(lambda s: f"-{s}"),
            st.tuples(sub, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        ),
        max_leaves=8,
    )


@settings(max_examples=60, deadline=None)
@given(_expr())
def test_unparse_roundtrip(src):
    f = parse(src, 3)
    g = parse(unparse(f), 3)
    assert unparse(g) == unparse(f)
    X = np.random.default_rng(1).uniform(-0.5, 0.5, size=(5, 3))
    np.testing.assert_allclose(evaluate(f, X), evaluate(g, X), rtol=1e-12, atol=1e-12)
