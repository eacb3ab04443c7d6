import math

import pytest

from tanapprox.expr import parse
from tanapprox.verify import (
    Config,
    EmptySliceError,
    NotISError,
    approximate,
    check_s_equivalence,
    check_tangential,
    fit_column,
    truncation,
)

SIN_CONE = parse("x1^2 + x2^2 - sin(x3)^2", 3)
CONE = parse("x1^2 + x2^2 - x3^2", 3)


def test_identical_maps_are_exactly_equivalent():
    rep = check_tangential(CONE, CONE, 10.0, Config())
    assert rep.s_equivalent and rep.tangentially_s_equivalent
    assert all(fit.exact_zero for fit in rep.fits.values())
    assert rep.tau is None


def test_tangential_thresholds():
    g = truncation(SIN_CONE, 3)
    assert check_tangential(SIN_CONE, g, 1.0, Config()).tangentially_s_equivalent
    rep = check_tangential(SIN_CONE, g, 2.5, Config())
    assert rep.s_equivalent and not rep.tangentially_s_equivalent
    assert rep.tau == pytest.approx(2.0, abs=0.05)
    rep5 = check_tangential(SIN_CONE, truncation(SIN_CONE, 5), 3.0, Config())
    assert rep5.tangentially_s_equivalent


def test_validity_radius_and_report_fields():
    rep = check_s_equivalence(SIN_CONE, truncation(SIN_CONE, 3), 1.0, Config())
    d = rep.to_dict()
    assert d["validity_radius"] == 0.1 and len(d["rows"]) == 6
    assert set(d["fits"]) == {"delta_fwd", "delta_bwd"}
    assert d["is_reports"]["f"]["verdict"] == "IS of dimension 2"


def test_fit_column_fallback_is_a_lower_bound():
    radii = [0.1, 0.05, 0.025, 0.0125]
    values = [1e-11, 1e-14, 1e-17, 1e-20]  # true slope ~ 10, mostly below the floor
    fit = fit_column(radii, values)
    assert fit.floor_limited and not fit.exact_zero
    assert fit.slope == pytest.approx(math.log(10) / math.log(2))
    assert fit_column(radii, [0.0] * 4).exact_zero


def test_non_is_inputs_are_rejected():
    with pytest.raises(EmptySliceError):
        check_s_equivalence(CONE, parse("x1^2 + x2^2 + x3^2", 3), 1.0, Config())
    with pytest.raises(NotISError):
        check_s_equivalence(CONE, parse("x1; x2", 3), 1.0, Config())
    with pytest.raises(NotISError):
        approximate(parse("-x1^2 - x2^2", 3), 1.0, Config())


def test_approximate_records_evidence():
    res = approximate(parse("x3^3 - x1^2 - x2^2", 3), 1.0, Config())
    assert res.k_star == 3 and res.passed
    first = res.evidence[0]
    assert first["k"] == 2 and not first["passed"]
    assert first["is_verdict"] == "singular locus touches slice"
    assert res.to_dict()["polynomial"] == "-x1^2 - x2^2 + x3^3"  # graded-lex order


def test_sin_cone_orders():
    # sin^2 is even, so T^2 f = T^3 f and T^4 f = T^5 f
    assert approximate(SIN_CONE, 1.0, Config()).k_star == 2
    res = approximate(SIN_CONE, 2.5, Config())
    assert res.k_star == 4
    assert res.k_star <= res.k0 + Config().headroom
