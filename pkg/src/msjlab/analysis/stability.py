"""Stability-region membership checks.

The one-or-all check is exact: any MSFQ threshold is stable iff the
normalized work rate ``λ1/(kμ1) + λk/μk`` is below one, and no policy is
stable at or above one.  For general class tables two work rates are
reported, one with ``⌊k/j⌋`` slots per class (sufficient for Static
Quickswap) and one with ``k/j`` (necessary for any policy).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from msjlab.workload import WorkloadSpec


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    margin: float
    boundary: float
    """Total arrival rate at which the work rate reaches one, holding class
    fractions fixed (``inf`` when the workload carries no load)."""


@dataclass(frozen=True)
class GeneralStability:
    sufficient_stable: bool
    necessary_unstable: bool
    sufficient_margin: float
    necessary_margin: float
    sufficient_boundary: float
    necessary_boundary: float

    @property
    def tight(self) -> bool:
        """True when both verdicts share the same boundary."""
        return math.isclose(self.sufficient_boundary, self.necessary_boundary, rel_tol=1e-12)


def _boundary(work_rate: float, total_rate: float) -> float:
    if work_rate <= 0.0:
        return math.inf
    return total_rate / work_rate


def one_or_all_work_rate(k: int, lam1: float, lamk: float, mu1: float, muk: float) -> float:
    return lam1 / (k * mu1) + lamk / muk


def stability_one_or_all(params) -> StabilityVerdict:
    """Exact stability verdict for the one-or-all system.

    ``params`` is anything with ``k, lam1, lamk, mu1, muk`` attributes,
    typically :class:`msjlab.analysis.MsfqParams`.

    >>> from msjlab.analysis import MsfqParams
    >>> v = stability_one_or_all(MsfqParams(k=32, lam1=6.75, lamk=0.75, mu1=1, muk=1, ell=31))
    >>> v.stable, round(v.margin, 4)
    (True, 0.0391)
    """
    rate = one_or_all_work_rate(params.k, params.lam1, params.lamk, params.mu1, params.muk)
    return StabilityVerdict(
        stable=rate < 1.0,
        margin=1.0 - rate,
        boundary=_boundary(rate, params.lam1 + params.lamk),
    )


def stability_general(spec: WorkloadSpec) -> GeneralStability:
    """Static-Quickswap sufficiency and universal-infeasibility verdicts."""
    k = spec.k
    floor_rate = sum(c.arrival_rate * c.mean_size / (k // c.need) for c in spec.classes)
    pooled_rate = sum(c.arrival_rate * c.mean_size * c.need / k for c in spec.classes)
    lam = spec.total_rate
    return GeneralStability(
        sufficient_stable=floor_rate < 1.0,
        necessary_unstable=pooled_rate >= 1.0,
        sufficient_margin=1.0 - floor_rate,
        necessary_margin=1.0 - pooled_rate,
        sufficient_boundary=_boundary(floor_rate, lam),
        necessary_boundary=_boundary(pooled_rate, lam),
    )
