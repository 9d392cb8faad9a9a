"""Exact expectations of polynomials in independent standard Gaussians.

A polynomial is a sparse map from exponent tuples to coefficients. Because the
variables are independent, the expectation of a monomial factorizes into
single-variable moments ``E[Z^k] = (k-1)!!`` (Isserlis), so no pairings are
enumerated explicitly.
"""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .hermite import MAX_MOMENT, HermiteSeries, MomentOverflowError, gaussian_moment


class Poly:
    """Sparse polynomial in ``nvars`` variables."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: dict[tuple[int, ...], float] | None = None):
        self.nvars = nvars
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0.0}

    @classmethod
    def const(cls, nvars: int, c: float) -> "Poly":
        return cls(nvars, {(0,) * nvars: float(c)})

    @classmethod
    def var(cls, nvars: int, i: int, scale: float = 1.0) -> "Poly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): float(scale)})

    @classmethod
    def univariate(cls, nvars: int, i: int, power_coeffs: Iterable[float]) -> "Poly":
        """``sum_j a_j x_i^j`` from monomial coefficients ``a_0, a_1, ...``."""
        out = {}
        for j, a in enumerate(power_coeffs):
            e = [0] * nvars
            e[i] = j
            out[tuple(e)] = float(a)
        return cls(nvars, out)

    @classmethod
    def hermite(cls, nvars: int, i: int, series: HermiteSeries) -> "Poly":
        return cls.univariate(nvars, i, series.to_power_basis())

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return Poly(self.nvars, out)

    def scale(self, c: float) -> "Poly":
        return Poly(self.nvars, {k: c * v for k, v in self.terms.items()})

    def __mul__(self, other: "Poly") -> "Poly":
        if self.degree + other.degree > MAX_MOMENT:
            raise MomentOverflowError(
                f"product degree {self.degree + other.degree} exceeds moment-table limit {MAX_MOMENT}"
            )
        out: dict[tuple[int, ...], float] = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                k = tuple(x + y for x, y in zip(ka, kb))
                out[k] = out.get(k, 0.0) + va * vb
        return Poly(self.nvars, out)

    def __pow__(self, q: int) -> "Poly":
        out = Poly.const(self.nvars, 1.0)
        for _ in range(q):
            out = out * self
        return out

    def expectation(self) -> float:
        """``E[p(Z)]`` for ``Z ~ N(0, I)``; terms are summed with ``math.fsum``."""
        vals = []
        for k, v in self.terms.items():
            m = 1.0
            for e in k:
                if e % 2:
                    m = 0.0
                    break
                m *= gaussian_moment(e)
            if m:
                vals.append(v * m)
        return math.fsum(vals)

    def __call__(self, *xs):
        """Evaluate at arrays ``xs[i]`` (one per variable)."""
        total = 0.0
        for k, v in self.terms.items():
            t = v
            for x, e in zip(xs, k):
                if e:
                    t = t * np.asarray(x, dtype=float) ** e
            total = total + t
        return total
