"""Probabilist's Hermite polynomials and Gaussian moments.

All expectations are with respect to the standard normal measure. Gauss-Hermite
nodes come from :func:`numpy.polynomial.hermite_e.hermegauss`, whose weight is
``exp(-x^2/2)``; dividing the weights by ``sqrt(2*pi)`` turns the rule into an
expectation over ``N(0, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

MAX_DEGREE = 20
MAX_MOMENT = 40
ZERO_TOL = 1e-10
DEFAULT_NODES = 200


class UnsupportedDegreeError(ValueError):
    pass


class NoInformationExponentError(ValueError):
    pass


class MomentOverflowError(ValueError):
    pass


def hermite_eval(k: int, x):
    """Evaluate He_k at ``x`` (scalar or array) by the three-term recurrence."""
    if k < 0 or k > MAX_DEGREE:
        raise UnsupportedDegreeError(f"degree {k} outside supported range 0..{MAX_DEGREE}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if k == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for j in range(1, k):
        prev, cur = cur, x * cur - j * prev
    return cur if cur.ndim else float(cur)


def hermite_table(L: int, x) -> np.ndarray:
    """Stack ``[He_0(x), ..., He_L(x)]`` along a new leading axis."""
    if L < 0 or L > MAX_DEGREE:
        raise UnsupportedDegreeError(f"degree {L} outside supported range 0..{MAX_DEGREE}")
    x = np.asarray(x, dtype=float)
    out = np.empty((L + 1,) + x.shape)
    out[0] = 1.0
    if L >= 1:
        out[1] = x
    for j in range(1, L):
        out[j + 1] = x * out[j] - j * out[j - 1]
    return out


@lru_cache(maxsize=16)
def gauss_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with ``sum(w * f(z)) ~= E[f(Z)]`` for ``Z ~ N(0, 1)``."""
    z, w = hermegauss(n)
    w = w / np.sqrt(2.0 * np.pi)
    z.flags.writeable = False
    w.flags.writeable = False
    return z, w


def gaussian_expectation(f: Callable, quad_nodes: int = DEFAULT_NODES) -> float:
    z, w = gauss_nodes(quad_nodes)
    return float(np.sum(w * f(z)))


@dataclass(frozen=True)
class HermiteSeries:
    """Truncated expansion ``sum_i coeffs[i] * He_i``."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) < 2:
            raise ValueError("a HermiteSeries needs at least c_0 and c_1")
        if len(c) - 1 > MAX_DEGREE:
            raise UnsupportedDegreeError(f"degree {len(c) - 1} exceeds {MAX_DEGREE}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_list(cls, values: Sequence[float], degree: int | None = None) -> "HermiteSeries":
        c = list(values)
        if degree is not None:
            c = (c + [0.0] * (degree + 1))[: degree + 1]
        while len(c) < 2:
            c.append(0.0)
        return cls(tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, i: int) -> float:
        return self.coeffs[i] if 0 <= i < len(self.coeffs) else 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        H = hermite_table(self.degree, x)
        out = np.tensordot(np.asarray(self.coeffs), H, axes=1)
        return out if out.ndim else float(out)

    def derivative(self) -> "HermiteSeries":
        """Term-wise derivative via ``He_k' = k He_{k-1}``."""
        c = [k * self.coeffs[k] for k in range(1, len(self.coeffs))]
        return HermiteSeries.from_list(c)

    def to_power_basis(self) -> np.ndarray:
        """Monomial coefficients, lowest degree first."""
        from numpy.polynomial.hermite_e import herme2poly

        return herme2poly(np.asarray(self.coeffs))

    def second_moment(self) -> float:
        """``E[f(Z)^2] = sum_i c_i^2 i!``."""
        return float(sum(c * c * factorial(i) for i, c in enumerate(self.coeffs)))

    def is_zero(self, tol: float = ZERO_TOL) -> bool:
        return all(abs(c) <= tol for c in self.coeffs)

    def serialize(self) -> str:
        """Canonical ``hermite:c1,c2,...`` form; a nonzero c_0 is not representable."""
        if abs(self.coeffs[0]) > ZERO_TOL:
            raise ValueError("hermite: form cannot carry a constant term")
        return "hermite:" + ",".join(repr(c) for c in self.coeffs[1:])


def hermite_project(f: Callable, L: int, quad_nodes: int = DEFAULT_NODES) -> HermiteSeries:
    """Coefficients ``c_i = E[f(Z) He_i(Z)] / i!`` for ``i = 0..L``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if quad_nodes < 4 * L:
        raise ValueError(f"quad_nodes={quad_nodes} below 4*L={4 * L}")
    z, w = gauss_nodes(quad_nodes)
    fz = np.asarray(f(z), dtype=float)
    H = hermite_table(L, z)
    coeffs = [float(np.sum(w * fz * H[i]) / factorial(i)) for i in range(L + 1)]
    return HermiteSeries(tuple(coeffs))


def info_exponent(g: HermiteSeries, tol: float = ZERO_TOL) -> int:
    """Index of the first non-negligible coefficient with index >= 1."""
    for i in range(1, len(g.coeffs)):
        if abs(g.coeffs[i]) > tol:
            return i
    raise NoInformationExponentError("all coefficients of index >= 1 vanish")


def double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def gaussian_moment(p: int) -> float:
    """``E[Z^p]`` for ``Z ~ N(0, 1)``."""
    if p < 0:
        raise ValueError("moment order must be nonnegative")
    if p > MAX_MOMENT:
        raise MomentOverflowError(f"moment order {p} exceeds table limit {MAX_MOMENT}")
    if p % 2:
        return 0.0
    return float(double_factorial(p - 1))
