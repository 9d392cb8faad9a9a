"""Scalar nonlinearities used as activations and teacher links.

A nonlinearity is specified by a string (``"tanh"``, ``"relu-centered"``,
``"hermite:c1,c2,..."``) or by a list of Hermite coefficients starting at
``c_1``. The empirical path evaluates ``fn``/``deriv``; theory reads ``series``,
the degree-``L`` Hermite truncation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from math import factorial

from .hermite import HermiteSeries, hermite_eval, hermite_project

log = logging.getLogger(__name__)

DEFAULT_DEGREE = 7
CENTER_TOL = 1e-8

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class SpecError(ValueError):
    pass


def _tanh_deriv(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _relu_centered(x):
    return np.maximum(x, 0.0) - _INV_SQRT_2PI


def _relu_deriv(x):
    return (np.asarray(x) > 0).astype(float)


def _relu_centered_series(degree: int) -> HermiteSeries:
    """Closed form; quadrature converges slowly across the kink.

    With ``z He_k = He_{k+1} + k He_{k-1}`` and ``int_0^inf He_m phi = He_{m-1}(0) phi(0)``,
    ``E[relu(z) He_k(z)] = phi(0) (He_k(0) + k He_{k-2}(0))`` for ``k >= 2``.
    """
    c = [0.0, 0.5]
    for k in range(2, degree + 1):
        c.append(_INV_SQRT_2PI * (hermite_eval(k, 0.0) + k * hermite_eval(k - 2, 0.0)) / factorial(k))
    return HermiteSeries(tuple(c))


_EXACT_SERIES = {"relu-centered": _relu_centered_series}

_BUILTINS: dict[str, tuple[Callable, Callable]] = {
    "tanh": (np.tanh, _tanh_deriv),
    "relu-centered": (_relu_centered, _relu_deriv),
}


@dataclass(frozen=True)
class Nonlinearity:
    name: str
    fn: Callable = field(repr=False, compare=False)
    deriv: Callable = field(repr=False, compare=False)
    series: HermiteSeries
    polynomial: bool

    def __call__(self, x):
        return self.fn(x)

    @property
    def spec(self) -> str:
        return self.name

    def centered(self) -> "Nonlinearity":
        """Subtract the constant Hermite coefficient when it is non-negligible."""
        c0 = self.series[0]
        if abs(c0) <= CENTER_TOL:
            return self
        log.warning("centering %s: removing constant Hermite coefficient %.3g", self.name, c0)
        fn, series = self.fn, self.series
        coeffs = (0.0,) + series.coeffs[1:]
        return Nonlinearity(
            name=f"{self.name}-centered" if not self.polynomial else HermiteSeries(coeffs).serialize(),
            fn=lambda x: fn(x) - c0,
            deriv=self.deriv,
            series=HermiteSeries(coeffs),
            polynomial=self.polynomial,
        )


def from_series(series: HermiteSeries) -> Nonlinearity:
    d = series.derivative()
    name = series.serialize() if abs(series[0]) <= 1e-10 else f"hermite0:{','.join(map(repr, series.coeffs))}"
    return Nonlinearity(name=name, fn=series, deriv=d, series=series, polynomial=True)


def parse(spec, degree: int = DEFAULT_DEGREE) -> Nonlinearity:
    """Build a :class:`Nonlinearity` from a config value."""
    if isinstance(spec, Nonlinearity):
        return spec
    if isinstance(spec, HermiteSeries):
        return from_series(spec)
    if isinstance(spec, (list, tuple)):
        try:
            coeffs = [0.0] + [float(v) for v in spec]
        except (TypeError, ValueError) as exc:
            raise SpecError(f"bad coefficient list {spec!r}") from exc
        return from_series(HermiteSeries.from_list(coeffs))
    if not isinstance(spec, str):
        raise SpecError(f"cannot interpret nonlinearity spec {spec!r}")
    s = spec.strip()
    if s.startswith("hermite:"):
        body = s[len("hermite:"):]
        try:
            coeffs = [0.0] + [float(v) for v in body.split(",") if v.strip()]
        except ValueError as exc:
            raise SpecError(f"bad hermite spec {spec!r}") from exc
        if len(coeffs) < 2:
            raise SpecError(f"hermite spec {spec!r} has no coefficients")
        return from_series(HermiteSeries.from_list(coeffs))
    if s in _BUILTINS:
        fn, deriv = _BUILTINS[s]
        series = _EXACT_SERIES[s](degree) if s in _EXACT_SERIES else hermite_project(fn, degree)
        return Nonlinearity(name=s, fn=fn, deriv=deriv, series=series, polynomial=False)
    raise SpecError(f"unknown nonlinearity {spec!r}; expected one of {sorted(_BUILTINS)} or hermite:<c1,...>")
