"""Mean response time of MSFQ in the one-or-all system.

Jobs are split by class and by the phase they arrive in.  Large jobs
arriving in phase 1 and small jobs arriving in phase 2 see an M/G/1 queue
whose first service of each busy period is exceptional (the work that piled
up while the other class held the servers); every other arrival waits out
the residual of an interval in which its class is not served.  Small jobs
arriving in phase 3 are handled through the visit counts of the M/M/k-like
descent from ``k-1`` to ``ell`` small jobs.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

from msjlab.analysis.jets import MomentJet
from msjlab.analysis.phases import MsfqParams, PhaseMoments, solve_phase_moments
from msjlab.errors import InstabilityError


def efs_mean_work(lam: float, s: tuple[float, float], s_exc: tuple[float, float]) -> float:
    """Time-average work in an M/G/1 queue with exceptional first service.

    Parameters
    ----------
    lam : float
        Arrival rate.
    s, s_exc : tuple of float
        ``(E[S], E[S^2])`` for ordinary and exceptional (first-in-busy-period)
        service.
    """
    m1, m2 = s
    x1, x2 = s_exc
    if lam == 0.0:
        return 0.0
    load = lam * m1
    denom = 1.0 - load + lam * x1
    if load >= 1.0 or denom <= 0.0:
        raise InstabilityError(f"EFS queue overloaded (load {load:.4g})")
    return lam * m2 / (2.0 * (1.0 - load)) + lam * (x2 - m2) / (2.0 * denom)


def efs_empty_prob(lam: float, s: tuple[float, float], s_exc: tuple[float, float]) -> float:
    """Probability an EFS M/G/1 queue is empty."""
    load = lam * s[0]
    denom = 1.0 - load + lam * s_exc[0]
    if load >= 1.0 or denom <= 0.0:
        raise InstabilityError(f"EFS queue overloaded (load {load:.4g})")
    return (1.0 - load) / denom


def _efs_response(lam, s, s_exc, service_mean) -> float:
    # arrivals landing in the EFS busy period wait for the work they find
    if s_exc[0] == 0.0:
        # nothing piled up: busy periods are opened by ordinary arrivals
        s_exc = s
    if lam * s[0] < 1.0 and 1.0 - lam * s[0] + lam * s_exc[0] <= 0.0:
        # negative exceptional work: the phase-start population assumed by
        # the approximation is not there, and the EFS queue is undefined
        return math.nan
    busy = 1.0 - efs_empty_prob(lam, s, s_exc)
    if busy <= 0.0:
        return service_mean
    return efs_mean_work(lam, s, s_exc) / busy + service_mean


def t1_large(params: MsfqParams, moments: PhaseMoments) -> float:
    """Large jobs arriving in phase 1: EFS queue whose first service is the
    ``N1L`` large jobs already waiting."""
    p, n = params, moments.N1L
    s = (1.0 / p.muk, 2.0 / p.muk**2)
    s_exc = (n.m1 / p.muk, (n.m2 + n.m1) / p.muk**2)
    return _efs_response(p.lamk, s, s_exc, 1.0 / p.muk)


def t2_small(params: MsfqParams, moments: PhaseMoments) -> float:
    """Small jobs arriving in phase 2: EFS queue served at rate ``kμ1`` whose
    first service is the ``N2S - k + 1`` jobs beyond the first ``k - 1``."""
    p, n, k = params, moments.N2S, params.k
    rate = k * p.mu1
    s = (1.0 / rate, 2.0 / rate**2)
    s_exc = ((n.m1 - k + 1) / rate,
             (n.m2 - (2 * k - 3) * n.m1 + k * k - 3 * k + 2) / rate**2)
    return _efs_response(p.lam1, s, s_exc, 1.0 / p.mu1)


def _excess_response(lam_over_rate: float, interval: MomentJet, service_mean: float) -> float | None:
    if interval.m1 <= 0.0:
        return None
    return (lam_over_rate + 1.0) * interval.m2 / (2.0 * interval.m1) + service_mean


def t_excess(params: MsfqParams, moments: PhaseMoments) -> dict[str, float | None]:
    """Arrivals during an interval in which their class is not served.

    Returns ``{"T234L": ..., "T14S": ...}``; a zero-length interval yields
    ``None``.
    """
    p = params
    return {
        "T234L": _excess_response(p.lamk / p.muk, moments.H234, 1.0 / p.muk),
        "T14S": _excess_response(p.lam1 / (p.k * p.mu1), moments.H41, 1.0 / p.mu1),
    }


def visit_counts(k: int, ell: int, lam1: float, mu1: float, tol: float = 1e-12,
                 max_states: int = 10_000_000) -> list[float]:
    """Expected visits ``C_j`` to each small-job count ``j = ell+1, ...`` while
    the count descends from ``k-1`` to ``ell``.

    Below ``k`` the counts follow from balancing up- and down-crossings of
    each level; above ``k`` they decay geometrically with ratio
    ``λ1/(kμ1)``.  The tail is cut once a term drops below ``tol`` times the
    running sum.
    """
    if ell >= k - 1:
        return []
    if lam1 >= k * mu1:
        raise InstabilityError("small jobs alone overload the system")
    lam, mu = lam1, mu1
    j = ell + 1
    c = [(lam + j * mu) / (j * mu)]
    total = c[0]
    for j in range(ell + 2, k + 1):
        nxt = c[-1] * lam * (lam + j * mu) / (j * mu * (lam + (j - 1) * mu))
        if j <= k - 1:
            nxt += (lam + j * mu) / (j * mu)
        c.append(nxt)
        total += nxt
    ratio = lam / (k * mu)
    while len(c) < max_states:
        nxt = c[-1] * ratio
        if nxt <= tol * total:
            break
        c.append(nxt)
        total += nxt
    return c


def t3_small(params: MsfqParams, tol: float = 1e-12) -> float | None:
    """Small jobs arriving in phase 3, or ``None`` when phase 3 is empty."""
    p = params
    c = visit_counts(p.k, p.ell, p.lam1, p.mu1, tol)
    if not c:
        return None
    num = den = 0.0
    for offset, cj in enumerate(c):
        j = p.ell + 1 + offset
        w = cj / (p.lam1 + min(p.k, j) * p.mu1)
        num += w * (p.k + max(j - p.k + 1, 0)) / (p.k * p.mu1)
        den += w
    return num / den


@dataclass
class MsfqAnalysis:
    """Output of :func:`analyze_msfq`."""

    params: MsfqParams
    moments: PhaseMoments
    terms: dict[str, float | None]
    mean_response: float
    mean_response_small: float | None
    mean_response_large: float | None
    weighted_response: float
    diagnostics: list[str] = field(default_factory=list)

    @property
    def fractions(self) -> tuple[float, float, float, float]:
        return self.moments.fractions

    def to_dict(self) -> dict:
        out = {"params": self.params.to_dict()}
        out.update(self.moments.to_dict())
        out["T_terms"] = {name: _json_value(v) for name, v in self.terms.items()}
        out["E_T"] = _json_value(self.mean_response)
        out["E_T_small"] = _json_value(self.mean_response_small)
        out["E_T_large"] = _json_value(self.mean_response_large)
        out["E_T_weighted"] = _json_value(self.weighted_response)
        out["diagnostics"] = list(self.diagnostics)
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, **kwargs)


def _json_value(x: float | None) -> float | None:
    # undefined terms (NaN) become null so the export stays strict JSON
    return None if x is None or math.isnan(x) else x


def _weighted(pairs) -> float | None:
    pairs = [(w, t) for w, t in pairs if w != 0.0]
    if not pairs:
        return None
    total = math.fsum(w for w, _ in pairs)
    return math.fsum(w * t for w, t in pairs) / total


def _diagnose(p: MsfqParams, pm: PhaseMoments) -> list[str]:
    notes = []
    if p.lamk > 0 and pm.N1L.m1 < 1.0:
        notes.append(f"E[N1L]={pm.N1L.m1:.4g} < 1: phase 1 often starts with no large job")
    if p.lam1 > 0 and pm.N2S.m1 < p.k - 1:
        notes.append(f"E[N2S]={pm.N2S.m1:.4g} < k-1: phase 2 often starts without k small jobs")
    for i, mi in enumerate(pm.fractions, start=1):
        if mi < 0.0:
            notes.append(f"phase {i} time fraction {mi:.4g} is negative")
    return notes


def _undefined_terms(terms: dict) -> list[str]:
    return [f"{name} undefined: the exceptional first service has negative mean"
            for name, value in terms.items() if value is not None and math.isnan(value)]


def analyze_msfq(params: MsfqParams, method: str = "linear") -> MsfqAnalysis:
    """Approximate mean response time of MSFQ with threshold ``params.ell``.

    The approximation assumes each phase 1 begins with a large job waiting
    and each phase 2 begins with at least ``k`` small jobs; at light load
    these fail, and the violations are listed in ``diagnostics``.
    """
    p = params
    pm = solve_phase_moments(p, method=method)
    frac1, frac2, frac3, frac4 = pm.fractions
    excess = t_excess(p, pm)
    terms = {
        "T1L": t1_large(p, pm) if p.lamk > 0 else None,
        "T234L": excess["T234L"],
        "T2S": t2_small(p, pm) if p.lam1 > 0 else None,
        "T3S": t3_small(p),
        "T14S": excess["T14S"],
    }

    def term(name):
        value = terms[name]
        return 0.0 if value is None else value

    large = (_weighted([(frac1, term("T1L")), (frac2 + frac3 + frac4, term("T234L"))])
             if p.lamk > 0 else None)
    small = (_weighted([(frac1 + frac4, term("T14S")), (frac2, term("T2S")), (frac3, term("T3S"))])
             if p.lam1 > 0 else None)
    lam = p.lam
    if lam == 0.0:
        mean = 0.0
    else:
        mean = (p.lamk / lam) * (large or 0.0) + (p.lam1 / lam) * (small or 0.0)
    rho1, rhok = p.lam1 / p.mu1, p.k * p.lamk / p.muk
    if rho1 + rhok > 0:
        weighted = (rho1 * (small or 0.0) + rhok * (large or 0.0)) / (rho1 + rhok)
    else:
        weighted = mean
    notes = _diagnose(p, pm) + _undefined_terms(terms)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return MsfqAnalysis(p, pm, terms, mean, small, large, weighted, notes)
