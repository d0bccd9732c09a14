from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from msjlab.analysis.jets import Jet, MomentJet

finite = st.floats(-3.0, 3.0, allow_nan=False)
positive = st.floats(0.2, 3.0)


def jet_of(f, df, d2f, x0):
    return Jet(f(x0), df(x0), d2f(x0))


@given(positive, positive, finite)
@settings(max_examples=200)
def test_product_and_quotient_rules(a, b, x0):
    # f = exp(a x), g = b + x^2
    f = Jet(math.exp(a * x0), a * math.exp(a * x0), a * a * math.exp(a * x0))
    g = Jet(b + x0**2, 2 * x0, 2.0)
    prod = f * g
    assert_allclose(prod.d1, f.d1 * g.value + f.value * g.d1, rtol=1e-12)
    quo = f / g
    # (f/g)'' by hand
    gv = g.value
    d1 = (f.d1 * gv - f.value * g.d1) / gv**2
    d2 = (f.d2 / gv - 2 * f.d1 * g.d1 / gv**2 - f.value * g.d2 / gv**2
          + 2 * f.value * g.d1**2 / gv**3)
    assert_allclose([quo.value, quo.d1, quo.d2], [f.value / gv, d1, d2], rtol=1e-10, atol=1e-12)


@given(positive, st.floats(-2.5, 2.5))
@settings(max_examples=200)
def test_power_and_sqrt(v, p):
    x = Jet(v, 0.7, -0.3)
    y = x**p
    assert_allclose(y.d1, p * v ** (p - 1) * 0.7, rtol=1e-12, atol=1e-300)
    assert_allclose(y.d2, p * (p - 1) * v ** (p - 2) * 0.49 + p * v ** (p - 1) * -0.3,
                    rtol=1e-10, atol=1e-12)
    r = x.sqrt()
    h = x**0.5
    assert_allclose([r.value, r.d1, r.d2], [h.value, h.d1, h.d2], rtol=1e-12)


@given(positive, finite)
@settings(max_examples=200)
def test_composition_chain_rule(a, x0):
    # outer = log(1 + t^2) at t = sin(a x0); inner = sin(a x)
    t = math.sin(a * x0)
    outer = Jet(math.log(1 + t * t), 2 * t / (1 + t * t), (2 - 2 * t * t) / (1 + t * t) ** 2)
    inner = Jet(t, a * math.cos(a * x0), -a * a * t)
    c = outer.of(inner)
    d1 = outer.d1 * inner.d1
    d2 = outer.d2 * inner.d1**2 + outer.d1 * inner.d2
    assert_allclose([c.d1, c.d2], [d1, d2], rtol=1e-12, atol=1e-14)


def test_reciprocal_of_zero():
    with pytest.raises(ZeroDivisionError):
        Jet(0.0, 1.0, 0.0).reciprocal()


def test_constant_and_variable():
    assert Jet.variable(2.0) == Jet(2.0, 1.0, 0.0)
    assert 3 * Jet.variable() + 1 == Jet(1.0, 3.0, 0.0)
    assert (1 - Jet.variable()) == Jet(1.0, -1.0, 0.0)
    assert Jet.variable(2.0) ** 0 == Jet.constant(1.0)


@pytest.mark.parametrize("rate", [0.5, 1.0, 4.0])
def test_exponential_moments(rate):
    jet = Jet(1.0, -1 / rate, 2 / rate**2)
    m = MomentJet.from_lst(jet)
    assert (m.v0, m.m1, m.m2) == (1.0, 1 / rate, 2 / rate**2)
    assert_allclose(m.variance, 1 / rate**2)
    assert m.lst_jet() == jet


@pytest.mark.parametrize("lam", [0.3, 2.0, 7.5])
def test_poisson_count_moments(lam):
    # Poisson pgf exp(lam (z-1)) at z = 1
    m = MomentJet.from_pgf(Jet(1.0, lam, lam * lam))
    assert_allclose([m.m1, m.m2, m.factorial2, m.variance], [lam, lam + lam**2, lam**2, lam])
    assert_allclose(m.pgf_jet().d2, lam**2)
