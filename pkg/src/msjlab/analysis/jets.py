"""Second-order Taylor jets for moment propagation through transforms.

A :class:`Jet` carries ``(f(x0), f'(x0), f''(x0))`` for a scalar function
expanded at a point ``x0``.  Arithmetic on jets follows the product,
quotient and chain rules truncated at second order, which is exact for the
first two derivatives.  Laplace-Stieltjes transforms are expanded at
``s = 0`` and z-transforms at ``z = 1``; :class:`MomentJet` converts either
expansion into the first two raw moments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Jet:
    """Value and first two derivatives of a function at an expansion point."""

    value: float
    d1: float = 0.0
    d2: float = 0.0

    @classmethod
    def variable(cls, x0: float = 0.0) -> Jet:
        """The identity function expanded at ``x0``."""
        return cls(float(x0), 1.0, 0.0)

    @classmethod
    def constant(cls, c: float) -> Jet:
        return cls(float(c), 0.0, 0.0)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.value + other.value, self.d1 + other.d1, self.d2 + other.d2)
        return Jet(self.value + other, self.d1, self.d2)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.value, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.value * other.value,
                self.d1 * other.value + self.value * other.d1,
                self.d2 * other.value + 2.0 * self.d1 * other.d1 + self.value * other.d2,
            )
        return Jet(self.value * other, self.d1 * other, self.d2 * other)

    __rmul__ = __mul__

    def reciprocal(self) -> Jet:
        v = self.value
        if v == 0.0:
            raise ZeroDivisionError("reciprocal of a jet with zero value")
        return Jet(1.0 / v, -self.d1 / v**2, 2.0 * self.d1**2 / v**3 - self.d2 / v**2)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.value / other, self.d1 / other, self.d2 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p: float) -> Jet:
        v = self.value
        if p == 0:
            return Jet.constant(1.0)
        return Jet(
            v**p,
            p * v ** (p - 1) * self.d1,
            p * (p - 1) * v ** (p - 2) * self.d1**2 + p * v ** (p - 1) * self.d2,
        )

    def sqrt(self) -> Jet:
        r = math.sqrt(self.value)
        return Jet(r, self.d1 / (2 * r), self.d2 / (2 * r) - self.d1**2 / (4 * r**3))

    def of(self, inner: Jet) -> Jet:
        """Compose ``self ∘ inner``.

        ``self`` must be expanded at ``inner.value``; the result is expanded
        at the expansion point of ``inner``.
        """
        return Jet(
            self.value,
            self.d1 * inner.d1,
            self.d2 * inner.d1**2 + self.d1 * inner.d2,
        )


@dataclass(frozen=True)
class MomentJet:
    """Transform value at its expansion point with the first two raw moments.

    ``m2`` is always the raw second moment ``E[X^2]``; for counts the
    factorial moment is available as :attr:`factorial2`.
    """

    v0: float
    m1: float
    m2: float

    @classmethod
    def from_lst(cls, jet: Jet) -> MomentJet:
        """Moments from a Laplace-Stieltjes transform jet taken at ``s = 0``."""
        return cls(jet.value, -jet.d1, jet.d2)

    @classmethod
    def from_pgf(cls, jet: Jet) -> MomentJet:
        """Moments from a z-transform jet taken at ``z = 1``."""
        return cls(jet.value, jet.d1, jet.d2 + jet.d1)

    def lst_jet(self) -> Jet:
        return Jet(self.v0, -self.m1, self.m2)

    def pgf_jet(self) -> Jet:
        return Jet(self.v0, self.m1, self.m2 - self.m1)

    @property
    def factorial2(self) -> float:
        return self.m2 - self.m1

    @property
    def variance(self) -> float:
        return self.m2 - self.m1**2
