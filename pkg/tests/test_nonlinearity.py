import math

import numpy as np
import pytest

from hpicone.hgroup import GroupPoint
from hpicone.nonlinearity import (constant_source, exponential, homogeneous, parse_nonlinearity, pure_power,
                                  shifted_power, validate_hypotheses, weighted_source)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_shifted_power_passes(p):
    rep = validate_hypotheses(shifted_power(0.5), p)
    assert rep.passed, rep.to_dict()
    assert rep.decrease_margin > 0 and rep.growth_margin >= 0


def test_weighted_shifted_power_passes():
    pts = [GroupPoint((x,), (y,), t) for x in (-0.5, 0.0, 0.5) for y in (-0.5, 0.5) for t in (-0.5, 0.5)]
    assert validate_hypotheses(shifted_power(0.5, weighted=True), 2.0, x_samples=pts).passed


def test_pure_power_fails_positivity_and_decrease():
    rep = validate_hypotheses(pure_power(2.5), 2.5)
    assert not rep.positivity and rep.min_value == 0.0
    assert not rep.strict_decrease
    assert rep.growth and not rep.passed


def test_exponential_fails_growth():
    rep = validate_hypotheses(exponential(), 2.0, r_ladder=[1.0, 10.0, 50.0])
    assert not rep.growth and rep.positivity


def test_constant_and_weighted_sources():
    for spec in (constant_source(1.0), weighted_source()):
        assert validate_hypotheses(spec, 2.0).passed


def test_ladder_must_increase():
    with pytest.raises(ValueError):
        validate_hypotheses(shifted_power(), 2.0, r_ladder=[1.0, 0.5])
    with pytest.raises(ValueError):
        validate_hypotheses(shifted_power(), 2.0, r_ladder=[0.0, 1.0])


def test_primitive_matches_quadrature():
    from scipy.integrate import quad
    coords = np.array([0.3, -0.1, 0.2])
    for spec in (shifted_power(0.5, weighted=True), homogeneous(3.0, 1.0, 2.5), exponential()):
        for r in (0.1, 1.0, 4.0):
            ref, _ = quad(lambda s: float(spec.f(coords, s)), 0.0, r, epsabs=1e-14, epsrel=1e-13)
            assert float(spec.F(coords, r)) == pytest.approx(ref, rel=1e-10)


def test_negative_extension():
    spec = shifted_power(0.5)
    c = np.zeros(3)
    assert spec.rhs(c, -2.0) == spec.f(c, 0.0)
    assert spec.primitive(c, -2.0) == pytest.approx(-2.0 * spec.f(c, 0.0))
    assert spec.primitive(c, 0.0) == 0.0


def test_limits():
    assert shifted_power().a0 == math.inf and shifted_power().a_inf == 0.0
    assert homogeneous(2.0, 0.0, 2.0).a0 == 2.0
    assert shifted_power().with_limits(a_inf=20.0).a_inf == 20.0


@pytest.mark.parametrize("text,label", [("rplus1:0.25", "rplus1:0.25"), ("wrplus1", "wrplus1:0.5"),
                                        ("const:2", "const:2"), ("quad", "quad"), ("hom:4,1", "hom:4,1"),
                                        ("pure", "pure"), ("exp", "exp")])
def test_parse(text, label):
    assert parse_nonlinearity(text, 2.0).label == label


@pytest.mark.parametrize("text", ["nope", "hom:1", "rplus1:a"])
def test_parse_errors(text):
    with pytest.raises(ValueError):
        parse_nonlinearity(text, 2.0)
