"""Phase-duration and phase-start population moments under MSFQ.

Phase 1 is a large-job busy period started by the ``N1L`` large jobs that
arrived during phases 2-4; phase 2 is a small-job busy period (service rate
``kμ1``) started by ``N2S - k + 1`` jobs, where ``N2S`` counts the small
arrivals during the preceding phases 4 and 1.  The transforms therefore
refer to each other:

* ``H1(s) = N1L(BL(s))`` and ``H2(s) = N2S(BS(s)) BS(s)^(1-k)``
* ``N1L(z) = H2 H3 H4`` evaluated at ``λk(1-z)``
* ``N2S(z) = H2(σ) H3(σ) H4(σ + λ1(1-z))`` with ``σ = λk(1 - BL(λ1(1-z)))``

Substituting the first line into the last gives a self-map of the ``N2S``
jet that is affine in its two derivatives, so the moments follow from a
2x2 linear solve.  A damped fixed-point iteration of the same map is kept
as a cross-check, and :class:`CycleTransforms` evaluates the transforms
pointwise by unrolling the functional equation, independent of the jets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from msjlab.analysis.jets import Jet, MomentJet
from msjlab.analysis.stability import stability_one_or_all
from msjlab.analysis.transforms import (
    Transform,
    busy_period_lst,
    h3_transform,
    h4_transform,
    large_busy_period,
    small_busy_period,
)
from msjlab.errors import ConfigurationError, ConvergenceError, InstabilityError
from msjlab.workload import WorkloadSpec


@dataclass(frozen=True)
class MsfqParams:
    """One-or-all MSFQ parameters: ``k`` servers, small (need 1) and large
    (need ``k``) arrival and service rates, and threshold ``ell``."""

    k: int
    lam1: float
    lamk: float
    mu1: float
    muk: float
    ell: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ConfigurationError(f"one-or-all analysis needs k >= 2, got {self.k}")
        if int(self.ell) != self.ell or not 0 <= self.ell <= self.k - 1:
            raise ConfigurationError(f"threshold must lie in [0, k-1], got {self.ell}")
        if self.lam1 < 0 or self.lamk < 0:
            raise ConfigurationError("arrival rates must be nonnegative")
        if not (self.mu1 > 0 and self.muk > 0):
            raise ConfigurationError("service rates must be positive")

    @classmethod
    def one_or_all(cls, k: int, lam: float, p_small: float, ell: int,
                   mu1: float = 1.0, muk: float = 1.0) -> MsfqParams:
        return cls(k, lam * p_small, lam * (1.0 - p_small), mu1, muk, ell)

    @classmethod
    def from_workload(cls, spec: WorkloadSpec, ell: int) -> MsfqParams:
        if not spec.is_one_or_all:
            raise ConfigurationError(f"MSFQ analysis needs needs within {{1, k}}, got {spec.needs}")
        small = spec.index_of(1)
        large = spec.index_of(spec.k)
        lam1 = spec.classes[small].arrival_rate if small is not None else 0.0
        mu1 = spec.classes[small].service_rate if small is not None else 1.0
        lamk = spec.classes[large].arrival_rate if large is not None else 0.0
        muk = spec.classes[large].service_rate if large is not None else 1.0
        return cls(spec.k, lam1, lamk, mu1, muk, ell)

    @property
    def lam(self) -> float:
        return self.lam1 + self.lamk

    def with_rate(self, lam: float) -> MsfqParams:
        """Same class mix at total arrival rate ``lam``."""
        if self.lam == 0.0:
            raise ConfigurationError("cannot rescale zero arrival rate")
        f = lam / self.lam
        return replace(self, lam1=self.lam1 * f, lamk=self.lamk * f)

    def to_dict(self) -> dict:
        return {"k": self.k, "lam1": self.lam1, "lamk": self.lamk,
                "mu1": self.mu1, "muk": self.muk, "ell": self.ell}


@dataclass(frozen=True)
class PhaseMoments:
    """First and second moments of every phase duration and phase-start count.

    ``H234`` is the combined phases 2-4 interval and ``H41`` the phase 4 +
    following phase 1 interval; both carry the correlation between their
    parts.  ``m`` holds the long-run time fractions of phases 1-4.
    """

    H1: MomentJet
    H2: MomentJet
    H3: MomentJet
    H4: MomentJet
    H234: MomentJet
    H41: MomentJet
    N1L: MomentJet
    N2S: MomentJet
    fractions: tuple[float, float, float, float]
    residual: float

    @property
    def durations(self) -> tuple[MomentJet, MomentJet, MomentJet, MomentJet]:
        return (self.H1, self.H2, self.H3, self.H4)

    def to_dict(self) -> dict:
        def mom(x: MomentJet):
            return {"mean": x.m1, "second": x.m2}

        return {
            "fractions": list(self.fractions),
            "H_moments": {name: mom(getattr(self, name))
                          for name in ("H1", "H2", "H3", "H4", "H234", "H41")},
            "N_moments": {"N1L": mom(self.N1L), "N2S": mom(self.N2S)},
        }


class _Cycle:
    """Jets shared by the moment solve: busy periods, phases 3-4, and the
    ``z``-expansions that feed phase durations into arrival counts."""

    def __init__(self, p: MsfqParams):
        verdict = stability_one_or_all(p)
        if not verdict.stable:
            raise InstabilityError(f"one-or-all system unstable (margin {verdict.margin:.4g})")
        self.p = p
        self.bS = small_busy_period(p).jet
        self.bL = large_busy_period(p).jet
        self.h3 = h3_transform(p).jet
        self.h4 = h4_transform(p).jet
        z = Jet.variable(1.0)
        beta = self.bL.of(p.lam1 * (1.0 - z))
        self.sigma = p.lamk * (1.0 - beta)
        self._h3_at_sigma = self.h3.of(self.sigma)
        self._h4_at_sigma = self.h4.of(self.sigma + p.lam1 * (1.0 - z))
        self._bS_pow = self.bS ** (1 - p.k)

    def h2(self, n2s: Jet) -> Jet:
        return n2s.of(self.bS) * self._bS_pow

    def n2s_update(self, n2s: Jet) -> Jet:
        return self.h2(n2s).of(self.sigma) * self._h3_at_sigma * self._h4_at_sigma

    def as_vector(self, y) -> np.ndarray:
        out = self.n2s_update(Jet(1.0, float(y[0]), float(y[1])))
        return np.array([out.d1, out.d2])


def _solve_linear(cycle: _Cycle) -> tuple[np.ndarray, float]:
    c = cycle.as_vector((0.0, 0.0))
    a = np.column_stack([cycle.as_vector((1.0, 0.0)) - c, cycle.as_vector((0.0, 1.0)) - c])
    y = np.linalg.solve(np.eye(2) - a, c)
    residual = float(np.max(np.abs(cycle.as_vector(y) - y) / np.maximum(1.0, np.abs(y))))
    return y, residual


def _solve_fixed_point(cycle: _Cycle, tol: float, max_iter: int, damping: float):
    y = np.zeros(2)
    for _ in range(max_iter):
        y_new = (1.0 - damping) * y + damping * cycle.as_vector(y)
        step = float(np.max(np.abs(y_new - y) / np.maximum(1.0, np.abs(y_new))))
        y = y_new
        if step <= tol:
            return y, step
    raise ConvergenceError("fixed-point iteration for phase moments did not converge", step)


def solve_phase_moments(params: MsfqParams, method: str = "linear", *, tol: float = 1e-10,
                        max_iter: int = 100_000, damping: float = 0.5) -> PhaseMoments:
    """Moments of ``H1..H4``, ``N1L``, ``N2S`` and the phase time fractions.

    ``method="linear"`` solves the affine jet map directly;
    ``method="fixed_point"`` iterates it with the given damping.
    """
    p = params
    cycle = _Cycle(p)
    if method == "linear":
        y, residual = _solve_linear(cycle)
    elif method == "fixed_point":
        y, residual = _solve_fixed_point(cycle, tol, max_iter, damping)
    else:
        raise ValueError(f"unknown method {method!r}")

    n2s = Jet(1.0, float(y[0]), float(y[1]))
    h2 = cycle.h2(n2s)
    h234 = h2 * cycle.h3 * cycle.h4
    z = Jet.variable(1.0)
    n1l = h234.of(p.lamk * (1.0 - z))
    h1 = n1l.of(cycle.bL)

    N1L, N2S = MomentJet.from_pgf(n1l), MomentJet.from_pgf(n2s)
    # Poisson counts over an interval T: E[N] = λE[T], E[N(N-1)] = λ²E[T²]
    if p.lamk > 0:
        H234 = MomentJet(1.0, N1L.m1 / p.lamk, N1L.factorial2 / p.lamk**2)
    else:
        H234 = MomentJet.from_lst(h234)
    if p.lam1 > 0:
        H41 = MomentJet(1.0, N2S.m1 / p.lam1, N2S.factorial2 / p.lam1**2)
    else:
        H41 = MomentJet.from_lst(h41_jet(cycle, h2))

    durations = [MomentJet.from_lst(j) for j in (h1, h2, cycle.h3, cycle.h4)]
    total = math.fsum(h.m1 for h in durations)
    fractions = tuple(h.m1 / total for h in durations)
    return PhaseMoments(*durations, H234=H234, H41=H41, N1L=N1L, N2S=N2S, fractions=fractions,
                        residual=residual)


def h41_jet(cycle: _Cycle, h2: Jet) -> Jet:
    """Direct LST jet of the phase 4 + phase 1 interval."""
    p = cycle.p
    s = Jet.variable(0.0)
    sL = p.lamk * (1.0 - cycle.bL)
    return h2.of(sL) * cycle.h3.of(sL) * cycle.h4.of(sL + s)


class CycleTransforms:
    """Pointwise evaluators of the cycle transforms.

    ``N2S`` satisfies ``N2S(z) = N2S(g(z)) h(z)`` with
    ``g(z) = BS(σ(z))``; under stability ``g`` contracts towards ``z = 1``
    so the infinite product of ``h`` along the orbit converges.
    """

    def __init__(self, params: MsfqParams, max_iter: int = 1_000_000):
        p = self.p = params
        if not stability_one_or_all(p).stable:
            raise InstabilityError("one-or-all system unstable")
        self.max_iter = max_iter
        # exact contraction ratio of the orbit and log-slope of its factor at z = 1
        cycle = _Cycle(p)
        self._ratio = cycle.bS.of(cycle.sigma).d1
        self._slope = (cycle._bS_pow.of(cycle.sigma) * cycle._h3_at_sigma * cycle._h4_at_sigma).d1
        self._h3 = h3_transform(p).func
        self._h4 = h4_transform(p).func

    def bS(self, s: float) -> float:
        return busy_period_lst(s, self.p.lam1, self.p.k * self.p.mu1)

    def bL(self, s: float) -> float:
        return busy_period_lst(s, self.p.lamk, self.p.muk)

    def _n2s_factor(self, x: float) -> tuple[float, float]:
        p = self.p
        sigma = p.lamk * (1.0 - self.bL(p.lam1 * (1.0 - x)))
        bs = self.bS(sigma)
        return bs ** (1 - p.k) * self._h3(sigma) * self._h4(sigma + p.lam1 * (1.0 - x)), bs

    def n2s(self, z: float, cutoff: float = 1e-11) -> float:
        """Orbit product, with the geometric remainder summed in closed form
        once the orbit is within ``cutoff`` of 1."""
        log_out, x = 0.0, float(z)
        for _ in range(self.max_iter):
            if abs(x - 1.0) < cutoff:
                return math.exp(log_out + self._slope * (x - 1.0) / (1.0 - self._ratio))
            factor, x = self._n2s_factor(x)
            log_out += math.log(factor)
        raise ConvergenceError("N2S product did not converge", abs(x - 1.0))

    def h2(self, s: float) -> float:
        b = self.bS(s)
        return self.n2s(b) * b ** (1 - self.p.k)

    def h234(self, s: float) -> float:
        return self.h2(s) * self._h3(s) * self._h4(s)

    def n1l(self, z: float) -> float:
        return self.h234(self.p.lamk * (1.0 - z))

    def h1(self, s: float) -> float:
        return self.n1l(self.bL(s))

    def h41(self, s: float) -> float:
        sL = self.p.lamk * (1.0 - self.bL(s))
        return self.h2(sL) * self._h3(sL) * self._h4(sL + s)

    def transforms(self, moments: PhaseMoments | None = None) -> dict[str, Transform]:
        """Evaluator/jet pairs for every cycle transform."""
        pm = moments or solve_phase_moments(self.p)
        return {
            "H1": Transform("lst", self.h1, pm.H1.lst_jet()),
            "H2": Transform("lst", self.h2, pm.H2.lst_jet()),
            "H234": Transform("lst", self.h234, pm.H234.lst_jet()),
            "H41": Transform("lst", self.h41, pm.H41.lst_jet()),
            "N1L": Transform("pgf", self.n1l, pm.N1L.pgf_jet()),
            "N2S": Transform("pgf", self.n2s, pm.N2S.pgf_jet()),
        }
