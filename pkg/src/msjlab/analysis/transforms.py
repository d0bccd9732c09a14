"""Busy-period and switchover-phase transforms for the one-or-all system.

Every quantity is returned as a :class:`Transform`: a pointwise evaluator
of the Laplace-Stieltjes transform (or z-transform) together with its
second-order jet at the expansion point.  The jets are what the response
time analysis consumes; the evaluators exist so the jets can be checked
against finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from msjlab.analysis.jets import Jet, MomentJet
from msjlab.errors import InstabilityError


@dataclass(frozen=True)
class Transform:
    """A transform evaluator plus its jet at ``s = 0`` (``kind="lst"``) or
    ``z = 1`` (``kind="pgf"``)."""

    kind: str
    func: Callable[[float], float]
    jet: Jet

    def __call__(self, x: float) -> float:
        return self.func(x)

    @property
    def point(self) -> float:
        return 0.0 if self.kind == "lst" else 1.0

    @property
    def moments(self) -> MomentJet:
        if self.kind == "lst":
            return MomentJet.from_lst(self.jet)
        return MomentJet.from_pgf(self.jet)


def busy_period_lst(s: float, lam: float, mu: float) -> float:
    """M/M/1 busy-period LST, the root of ``λB² − (λ+μ+s)B + μ = 0`` with ``B(0) = 1``.

    Written in rationalized form so ``λ = 0`` gives ``μ/(μ+s)``.
    """
    a = lam + mu + s
    disc = a * a - 4.0 * lam * mu
    if disc < 0.0:
        raise ValueError(f"busy-period transform undefined at s={s}")
    return 2.0 * mu / (a + math.sqrt(disc))


def busy_period(lam: float, mu: float) -> Transform:
    """Busy period of an M/M/1 queue with arrival rate ``lam`` and service rate ``mu``.

    Moments are ``E[B] = E[S]/(1-ρ)`` and ``E[B²] = E[S²]/(1-ρ)³``.
    """
    if lam < 0 or mu <= 0:
        raise ValueError("rates must satisfy lam >= 0, mu > 0")
    if lam >= mu:
        raise InstabilityError(f"busy period is infinite: lam={lam} >= mu={mu}")
    rho = lam / mu
    m1 = (1.0 / mu) / (1.0 - rho)
    m2 = (2.0 / mu**2) / (1.0 - rho) ** 3
    return Transform("lst", lambda s: busy_period_lst(s, lam, mu), Jet(1.0, -m1, m2))


def exponential(rate: float) -> Transform:
    return Transform("lst", lambda s: rate / (rate + s),
                     Jet(1.0, -1.0 / rate, 2.0 / rate**2))


def h4_transform(params) -> Transform:
    """Phase 4: the ``ℓ`` small jobs left in service finish with no admissions,
    a sum of ``Exp(jμ1)`` for ``j = 1..ℓ``."""
    mu1, ell = params.mu1, params.ell

    def func(s: float) -> float:
        out = 1.0
        for j in range(1, ell + 1):
            out *= j * mu1 / (j * mu1 + s)
        return out

    jet = Jet.constant(1.0)
    for j in range(1, ell + 1):
        jet = jet * exponential(j * mu1).jet
    return Transform("lst", func, jet)


def small_busy_period(params) -> Transform:
    """Busy period of small jobs while all ``k`` servers work: rate ``kμ1``."""
    return busy_period(params.lam1, params.k * params.mu1)


def large_busy_period(params) -> Transform:
    return busy_period(params.lamk, params.muk)


def h3_step_transforms(params) -> dict[int, Transform]:
    """Transit times from ``j`` to ``j-1`` small jobs, ``j = ℓ+1..k``.

    ``H3,k`` is the small busy period; below ``k`` the transforms follow
    ``H3,j(s) = jμ1 / (λ1 + jμ1 + s − λ1 H3,j+1(s))``.
    """
    k, lam, mu, ell = params.k, params.lam1, params.mu1, params.ell
    top = small_busy_period(params)
    steps = {k: top}
    s_var = Jet.variable(0.0)
    jet = top.jet

    def step_value(s: float, j: int) -> float:
        upper = busy_period_lst(s, lam, k * mu)
        for i in range(k - 1, j - 1, -1):
            upper = i * mu / (lam + i * mu + s - lam * upper)
        return upper

    for j in range(k - 1, ell, -1):
        jet = (j * mu) / (lam + j * mu + s_var - lam * jet)
        steps[j] = Transform("lst", lambda s, j=j: step_value(s, j), jet)
    return steps


def h3_transform(params) -> Transform:
    """Phase 3: the M/M/k-like descent from ``k-1`` small jobs to ``ℓ``."""
    k, lam, mu, ell = params.k, params.lam1, params.mu1, params.ell
    if lam >= k * mu:
        raise InstabilityError("small jobs alone overload the system")
    steps = h3_step_transforms(params)
    jet = Jet.constant(1.0)
    for j in range(ell + 1, k):
        jet = jet * steps[j].jet

    def func(s: float) -> float:
        # one downward sweep evaluates every factor
        upper = busy_period_lst(s, lam, k * mu)
        out = 1.0
        for j in range(k - 1, ell, -1):
            upper = j * mu / (lam + j * mu + s - lam * upper)
            out *= upper
        return out

    return Transform("lst", func, jet)
