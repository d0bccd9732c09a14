from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from msjlab.analysis import MsfqParams, stability_general, stability_one_or_all
from msjlab.workload import ClassSpec, WorkloadSpec


def test_one_or_all_margin():
    v = stability_one_or_all(MsfqParams(32, 6.75, 0.75, 1.0, 1.0, 31))
    assert v.stable
    assert_allclose(v.margin, 1 - (6.75 / 32 + 0.75), rtol=1e-12)
    assert round(v.margin, 4) == 0.0391
    assert_allclose(v.boundary, 1 / (0.9 / 32 + 0.1), rtol=1e-12)
    assert round(v.boundary, 4) == 7.8049


def test_empty_load():
    v = stability_one_or_all(MsfqParams(32, 0.0, 0.0, 1.0, 1.0, 0))
    assert v.stable and v.margin == 1.0 and v.boundary == math.inf


def test_boundary_is_unstable():
    # 16/32 + 0.5 is exactly 1 in floating point
    v = stability_one_or_all(MsfqParams(32, 16.0, 0.5, 1.0, 1.0, 31))
    assert not v.stable and v.margin == 0.0


def test_four_class_boundary():
    spec = WorkloadSpec.from_fractions(15, [1, 3, 5, 15], [0.5, 0.25, 0.2, 0.05], [1, 1, 1, 1], 4.0)
    g = stability_general(spec)
    assert_allclose([g.sufficient_boundary, g.necessary_boundary], [5.0, 5.0], rtol=1e-12)
    assert g.tight and g.sufficient_stable and not g.necessary_unstable


def test_non_divisor_needs_split_verdicts():
    # need 2 on k=3 wastes a server under per-class slots
    spec = WorkloadSpec(3, (ClassSpec(2, 1.0, 1.0),))
    g = stability_general(spec)
    assert_allclose(g.sufficient_boundary, 1.0)
    assert_allclose(g.necessary_boundary, 1.5)
    assert not g.tight and not g.sufficient_stable and not g.necessary_unstable


def test_general_empty_load():
    g = stability_general(WorkloadSpec(4, (ClassSpec(1, 0.0, 1.0), ClassSpec(4, 0.0, 1.0))))
    assert g.sufficient_margin == g.necessary_margin == 1.0
    assert g.sufficient_boundary == math.inf


@given(st.integers(1, 64), st.floats(0.01, 0.99), st.floats(0.1, 20.0))
@settings(max_examples=200)
def test_one_or_all_agrees_with_general(k, p, lam):
    spec = WorkloadSpec.one_or_all(k, lam, p) if k > 1 else WorkloadSpec(1, (ClassSpec(1, lam, 1.0),))
    g = stability_general(spec)
    if k > 1:
        v = stability_one_or_all(MsfqParams.from_workload(spec, 0))
        assert_allclose(v.margin, g.necessary_margin, rtol=1e-9, atol=1e-12)
    # needs 1 and k divide k, so the two general verdicts coincide
    assert g.tight
    assert g.sufficient_stable == (not g.necessary_unstable)


@pytest.mark.parametrize("scale", [0.5, 0.999, 1.001, 2.0])
def test_boundary_scaling(scale):
    spec = WorkloadSpec.one_or_all(32, 1.0, 0.9)
    boundary = stability_one_or_all(MsfqParams.from_workload(spec, 31)).boundary
    v = stability_one_or_all(MsfqParams.from_workload(spec.scaled(scale * boundary), 31))
    assert v.stable == (scale < 1)
