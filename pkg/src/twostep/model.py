"""Teacher model, data generation and network initialization."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rng_mod
from .activation import DEFAULT_DEGREE, Nonlinearity, parse
from .hermite import info_exponent

ORTHO_TOL = 1e-10
MAX_GS_RETRIES = 3


class TeacherError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TeacherSpec:
    links: tuple[Nonlinearity, ...]
    directions: np.ndarray = field(repr=False)  # (M, d_X), one direction per row
    noise_sigma: float = 0.0
    orthonormal: bool = True

    def __post_init__(self):
        B = np.asarray(self.directions, dtype=float)
        if B.ndim != 2 or B.shape[0] != len(self.links):
            raise TeacherError("directions must be an (M, d_X) array with one row per link")
        if B.shape[0] > B.shape[1]:
            raise TeacherError(f"M={B.shape[0]} exceeds d_X={B.shape[1]}")
        if self.orthonormal:
            gram = B @ B.T
            if np.max(np.abs(gram - np.eye(len(gram)))) > ORTHO_TOL:
                raise TeacherError("directions are not orthonormal")
        B.flags.writeable = False
        object.__setattr__(self, "directions", B)

    @property
    def M(self) -> int:
        return len(self.links)

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    def response(self, X: np.ndarray) -> np.ndarray:
        """Noise-free ``sum_k g_k(X beta_k)``."""
        Z = X @ self.directions.T
        return sum(g(Z[:, k]) for k, g in enumerate(self.links))


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def rows(self, sl: slice) -> "Dataset":
        return Dataset(self.X[sl], self.y[sl])

    def to_csv(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        xp, yp = directory / "X.csv", directory / "y.csv"
        with open(xp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j}" for j in range(self.d)])
            w.writerows(self.X.tolist())
        with open(yp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y"])
            w.writerows([[v] for v in self.y.tolist()])
        return xp, yp


@dataclass(frozen=True, eq=False)
class NetworkInit:
    W0: np.ndarray = field(repr=False)
    a0: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.W0.shape[0]


def modified_gram_schmidt(V: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray | None:
    """Orthonormalize the rows of ``V``; ``None`` on numerical breakdown."""
    Q = np.array(V, dtype=float, copy=True)
    for i in range(Q.shape[0]):
        norm0 = np.linalg.norm(Q[i])
        for j in range(i):
            Q[i] -= (Q[j] @ Q[i]) * Q[j]
        norm = np.linalg.norm(Q[i])
        if norm0 == 0 or norm < rel_tol * norm0:
            return None
        Q[i] /= norm
    return Q


def make_teacher(
    M: int,
    link_specs: Sequence,
    noise_sigma: float,
    d: int,
    seed: int,
    raw_gaussian_directions: bool = False,
    degree: int = DEFAULT_DEGREE,
) -> TeacherSpec:
    """Draw ``M`` target directions and attach the parsed link functions.

    With ``raw_gaussian_directions`` the directions are left as ``N(0, I/d)``
    draws, the convention of the original simulations, instead of being
    orthonormalized.
    """
    if M < 1:
        raise TeacherError("M must be >= 1")
    if M > d:
        raise TeacherError(f"M={M} exceeds d_X={d}")
    if len(link_specs) != M:
        raise TeacherError(f"expected {M} link specs, got {len(link_specs)}")
    if noise_sigma < 0:
        raise TeacherError("noise_sigma must be nonnegative")
    links = tuple(parse(s, degree) for s in link_specs)
    for g in links:
        if g.series.is_zero() and g.polynomial:
            raise TeacherError(f"link {g.name} is identically zero")
    for attempt in range(MAX_GS_RETRIES + 1):
        label = rng_mod.TEACHER if attempt == 0 else f"{rng_mod.TEACHER}#{attempt}"
        G = rng_mod.stream(seed, label).standard_normal((M, d))
        if raw_gaussian_directions:
            return TeacherSpec(links, G / np.sqrt(d), float(noise_sigma), orthonormal=False)
        Q = modified_gram_schmidt(G)
        if Q is not None:
            return TeacherSpec(links, Q, float(noise_sigma))
    raise TeacherError(f"Gram-Schmidt broke down after {MAX_GS_RETRIES} retries")


def teacher_info_exponents(teacher: TeacherSpec) -> list[int]:
    return [info_exponent(g.series) for g in teacher.links]


def generate_dataset(teacher: TeacherSpec, n: int, seed: int) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    gx, ge = rng_mod.substreams(seed, rng_mod.DATA, 2)
    X = gx.standard_normal((n, teacher.d))
    y = teacher.response(X)
    if teacher.noise_sigma > 0:
        y = y + teacher.noise_sigma * ge.standard_normal(n)
    return Dataset(X, np.asarray(y, dtype=float))


def init_network(N: int, d: int, seed: int) -> NetworkInit:
    if N < 1 or d < 1:
        raise ValueError("N and d must be >= 1")
    W0 = rng_mod.stream(seed, rng_mod.W0).standard_normal((N, d)) / np.sqrt(d)
    a0 = rng_mod.stream(seed, rng_mod.A0).standard_normal(N) / np.sqrt(N)
    return NetworkInit(W0, a0)
