from __future__ import annotations

import dataclasses
import json
import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from msjlab import InstabilityError
from msjlab.analysis import (MomentJet, MsfqParams, analyze_msfq, efs_empty_prob, efs_mean_work,
                             h3_transform, solve_phase_moments, stability_one_or_all, t1_large, t2_small, t3_small,
                             t_excess, visit_counts)

HEAVY = MsfqParams.one_or_all(32, 6.0, 0.9, 31)


@pytest.mark.parametrize("lam, s, s_exc, work, empty", [
    (0.5, (1.0, 2.0), (1.0, 2.0), 1.0, 0.5),
    (0.0, (1.0, 2.0), (3.0, 20.0), 0.0, 1.0),
    (0.25, (2.0, 8.0), (0.0, 0.0), 0.25 * 8 / (2 * 0.5) - 0.25 * 8 / (2 * 0.5), 1.0),
])
def test_efs_examples(lam, s, s_exc, work, empty):
    assert_allclose(efs_mean_work(lam, s, s_exc), work, atol=1e-15)
    assert_allclose(efs_empty_prob(lam, s, s_exc), empty, rtol=1e-15)


def test_efs_reduces_to_mm1_work():
    # M/M/1 time-average work: ρ/(μ - λ)
    lam, mu = 0.7, 1.3
    s = (1 / mu, 2 / mu**2)
    assert_allclose(efs_mean_work(lam, s, s), (lam / mu) / (mu - lam), rtol=1e-12)
    assert_allclose(efs_empty_prob(lam, s, s), 1 - lam / mu, rtol=1e-12)


def test_efs_overload():
    with pytest.raises(InstabilityError):
        efs_mean_work(1.0, (1.0, 2.0), (1.0, 2.0))
    with pytest.raises(InstabilityError):
        efs_empty_prob(2.0, (1.0, 2.0), (1.0, 2.0))


def _with(pm, **changes):
    return dataclasses.replace(pm, **changes)


def test_t1_light_traffic_limit():
    p = MsfqParams(4, 0.5, 1e-9, 1.0, 2.0, 1)
    pm = _with(solve_phase_moments(p), N1L=MomentJet(1.0, 1.0, 1.0))
    assert_allclose(t1_large(p, pm), 2 / p.muk, rtol=1e-6)


def test_t1_no_exceptional_work():
    # nothing piled up: busy periods start with an ordinary job, so the wait
    # is the M/M/1 wait given a busy server, E[W]/ρ = 1/(μ-λ), plus service
    p = MsfqParams(4, 0.5, 0.4, 1.0, 1.0, 1)
    expected = 1 / (1.0 - 0.4) + 1.0
    pm = _with(solve_phase_moments(p), N1L=MomentJet(1.0, 0.0, 0.0))
    assert_allclose(t1_large(p, pm), expected, rtol=1e-12)
    # and it is the limit of a vanishing pile
    pm = _with(pm, N1L=MomentJet(1.0, 1e-9, 1e-9))
    assert_allclose(t1_large(p, pm), expected, rtol=1e-6)


def test_t2_counts_only_jobs_beyond_k_minus_one():
    # exactly k-1+n waiting small jobs, n deterministic: exceptional work n/(kμ1)
    p = MsfqParams(4, 1.0, 0.1, 1.0, 1.0, 1)
    n = 5.0
    count = n + p.k - 1
    pm = _with(solve_phase_moments(p), N2S=MomentJet(1.0, count, count**2))
    rate = p.k * p.mu1
    s = (1 / rate, 2 / rate**2)
    x = (n / rate, (n * n + n) / rate**2)
    expected = efs_mean_work(p.lam1, s, x) / (1 - efs_empty_prob(p.lam1, s, x)) + 1 / p.mu1
    assert_allclose(t2_small(p, pm), expected, rtol=1e-12)


def test_excess_terms():
    p = MsfqParams(4, 1.0, 1e-12, 1.0, 2.0, 1)
    d = 3.0
    pm = _with(solve_phase_moments(p), H234=MomentJet(1.0, d, d * d),
               H41=MomentJet(1.0, 0.0, 0.0))
    out = t_excess(p, pm)
    # deterministic interval: mean residual d/2, then own service
    assert_allclose(out["T234L"], d / 2 + 1 / p.muk, rtol=1e-9)
    assert out["T14S"] is None


def test_visit_count_example():
    c = visit_counts(2, 0, 1.0, 1.0)
    assert_allclose(c[:2], [2.0, 1.5], rtol=1e-15)
    tail = 1.5 * 0.5 ** np.arange(1, len(c) - 1)
    assert_allclose(c[2:], tail, rtol=1e-14)
    assert c[-1] * 0.5 <= 1e-12 * sum(c) < c[-1]


@pytest.mark.parametrize("k, ell, lam1, mu1", [(2, 0, 1.0, 1.0), (5, 1, 3.0, 1.0),
                                               (8, 0, 7.0, 1.2), (32, 20, 20.0, 1.0)])
def test_visit_counts_match_fundamental_matrix(k, ell, lam1, mu1):
    # expected visits of the transient states, from (I - Q)^-1 on a truncated chain
    top = k + 400
    states = np.arange(ell + 1, top)
    q = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        up = lam1 / (lam1 + min(s, k) * mu1)
        if i + 1 < len(states):
            q[i, i + 1] = up
        if i > 0:
            q[i, i - 1] = 1 - up
    start = np.zeros(len(states))
    start[k - 1 - (ell + 1)] = 1.0
    exact = np.linalg.solve((np.eye(len(states)) - q).T, start)
    c = np.array(visit_counts(k, ell, lam1, mu1))
    n = min(len(c), len(exact))
    assert_allclose(c[:n], exact[:n], rtol=1e-9, atol=1e-13)


@pytest.mark.parametrize("k, ell, lam1", [(3, 0, 1.5), (5, 2, 4.0), (32, 10, 25.0)])
def test_visit_time_equals_phase_three_mean(k, ell, lam1):
    # time in phase 3 = Σ visits × mean holding time in each state
    p = MsfqParams(k, lam1, 0.01, 1.0, 1.0, ell)
    c = visit_counts(k, ell, lam1, 1.0)
    held = sum(cj / (lam1 + min(k, ell + 1 + i)) for i, cj in enumerate(c))
    assert_allclose(held, h3_transform(p).moments.m1, rtol=1e-10)


def test_t3_light_traffic_limit():
    assert_allclose(t3_small(MsfqParams(8, 1e-9, 0.0, 2.0, 1.0, 0)), 1 / 2.0, rtol=1e-6)


def test_phase_three_empty():
    assert visit_counts(4, 3, 1.0, 1.0) == []
    assert t3_small(MsfqParams(4, 1.0, 0.1, 1.0, 1.0, 3)) is None
    with pytest.raises(InstabilityError):
        visit_counts(4, 0, 4.0, 1.0)


def test_analysis_assembly():
    a = analyze_msfq(HEAVY)
    m1, m2, m3, m4 = a.fractions
    t = a.terms
    assert t["T3S"] is None and m3 == 0.0
    large = (t["T1L"] * m1 + t["T234L"] * (m2 + m3 + m4)) / (m1 + m2 + m3 + m4)
    small = (t["T14S"] * (m1 + m4) + t["T2S"] * m2) / (m1 + m2 + m4)
    assert_allclose([a.mean_response_large, a.mean_response_small], [large, small], rtol=1e-12)
    assert_allclose(a.mean_response, 0.1 * large + 0.9 * small, rtol=1e-12)
    rho1, rhok = 5.4, 32 * 0.6
    assert_allclose(a.weighted_response, (rho1 * small + rhok * large) / (rho1 + rhok), rtol=1e-12)
    assert a.diagnostics == []


def test_msf_is_threshold_zero():
    a = analyze_msfq(MsfqParams.one_or_all(32, 6.0, 0.9, 0))
    assert a.terms["T3S"] is not None and a.fractions[3] == 0.0
    assert a.mean_response > analyze_msfq(HEAVY).mean_response


def test_json_export():
    doc = json.loads(analyze_msfq(HEAVY).to_json())
    for key in ("params", "fractions", "H_moments", "N_moments", "T_terms", "E_T", "E_T_weighted"):
        assert key in doc
    assert doc["params"]["ell"] == 31
    assert_allclose(sum(doc["fractions"]), 1.0)


def test_light_load_diagnostics():
    with pytest.warns(RuntimeWarning, match="N1L"):
        a = analyze_msfq(MsfqParams.one_or_all(32, 0.01, 0.9, 31))
    assert any("N2S" in d for d in a.diagnostics)


def test_undefined_terms_are_nan():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = analyze_msfq(MsfqParams.one_or_all(32, 2.0, 0.9, 31))
    assert math.isnan(a.terms["T2S"]) and math.isnan(a.mean_response)
    assert any("T2S undefined" in d for d in a.diagnostics)


@pytest.mark.parametrize("k, p_small", [(32, 0.9), (8, 0.5), (4, 0.8), (2, 0.5)])
def test_mean_response_nondecreasing_in_load(k, p_small):
    base = MsfqParams.one_or_all(k, 1.0, p_small, 0)
    boundary = stability_one_or_all(base).boundary
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for ell in sorted({0, 1, k // 2, k - 1}):
            ts = np.array([analyze_msfq(MsfqParams.one_or_all(k, lam, p_small, ell)).mean_response
                           for lam in np.linspace(0.001, 0.99, 60) * boundary])
            finite = ts[np.isfinite(ts)]
            assert len(finite) >= 15
            assert np.all(np.diff(finite) >= 0), (k, ell)
