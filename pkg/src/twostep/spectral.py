"""Singular spectra, bulk edge, outliers, operator norms and alignments."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .hermite import hermite_eval

DEFAULT_MARGIN = 0.05


class SpectralError(ArithmeticError):
    pass


class PowerIterationError(SpectralError):
    def __init__(self, msg, last_iterate, last_value):
        super().__init__(msg)
        self.last_iterate = last_iterate
        self.last_value = last_value


class DegenerateInputError(ValueError):
    pass


def bulk_edge(N: int, d: int) -> float:
    """Top singular value of an ``N x d`` matrix with ``N(0, 1/d)`` entries, as N, d grow."""
    return 1.0 + np.sqrt(N / d)


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> None:
    """Flip pairs in place so each right vector's first nonzero entry is positive."""
    for i in range(Vt.shape[0]):
        nz = np.flatnonzero(Vt[i])
        if nz.size and Vt[i, nz[0]] < 0:
            Vt[i] *= -1
            U[:, i] *= -1


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    singvals: np.ndarray = field(repr=False)
    bulk_edge: float
    margin: float
    shape: tuple[int, int]
    left: np.ndarray = field(repr=False)  # (N, outliers)
    right: np.ndarray = field(repr=False)  # (outliers, d)

    @property
    def threshold(self) -> float:
        return self.bulk_edge * (1.0 + self.margin)

    @property
    def outlier_count(self) -> int:
        return int(np.sum(self.singvals > self.threshold))

    @property
    def outliers(self) -> np.ndarray:
        return self.singvals[: self.outlier_count]

    @property
    def top_vectors(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.left[:, i], self.right[i]) for i in range(self.right.shape[0])]

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "bulk_edge": self.bulk_edge,
            "margin": self.margin,
            "threshold": self.threshold,
            "outlier_count": self.outlier_count,
            "singvals": self.singvals.tolist(),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    def histogram(self, bins: int = 60) -> list[tuple[float, float, int]]:
        """Fixed-width bins from 0 to just past the largest singular value."""
        hi = float(self.singvals.max()) * 1.0001 if self.singvals.size else 1.0
        counts, edges = np.histogram(self.singvals, bins=bins, range=(0.0, hi))
        return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]

    def histogram_csv(self, path, bins: int = 60) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count"])
            for row in self.histogram(bins):
                w.writerow([repr(row[0]), repr(row[1]), row[2]])


def svd_spectrum(W, margin: float = DEFAULT_MARGIN, keep: int | None = None) -> SpectrumReport:
    """Full SVD of ``W`` with outliers counted above ``bulk_edge * (1 + margin)``.

    ``keep`` fixes how many leading singular-vector pairs are retained; by
    default only the outliers' vectors are kept.
    """
    W = np.asarray(W, dtype=float)
    if margin <= 0:
        raise ValueError("margin must be positive")
    if not np.all(np.isfinite(W)):
        raise SpectralError("matrix has non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"SVD failed for {W.shape} matrix: {exc}") from exc
    N, d = W.shape
    edge = bulk_edge(N, d)
    count = int(np.sum(s > edge * (1 + margin)))
    k = count if keep is None else max(keep, count)
    U, Vt = U[:, :k].copy(), Vt[:k].copy()
    _fix_signs(U, Vt)
    return SpectrumReport(s, float(edge), float(margin), (N, d), U, Vt)


def operator_norm(A, tol: float = 1e-8, max_iter: int = 20000, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``A^T A``.

    The estimate increases monotonically; iteration stops once the remaining
    gap, extrapolated from the observed contraction of successive changes, is
    below ``tol`` relative.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise SpectralError("matrix has non-finite entries")
    if A.size == 0 or not np.any(A):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est, prev_delta = 0.0, 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        new = float(np.sqrt(v @ w))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        delta = new - est
        if est > 0:
            if delta <= 0:
                return max(new, est)
            if prev_delta > 0:
                q = min(delta / prev_delta, 1.0 - 1e-12)
                if delta * q / (1.0 - q) <= tol * new and delta <= tol * new:
                    return new
            prev_delta = delta
        est = new
    raise PowerIterationError(f"power iteration did not converge in {max_iter} steps", v, est)


def operator_norm_fast(A) -> float:
    """Lanczos-based top singular value (ARPACK); for large residual sweeps."""
    from scipy.sparse.linalg import svds

    A = np.asarray(A, dtype=float)
    if min(A.shape) < 3:
        return float(np.linalg.norm(A, 2))
    return float(svds(A, k=1, return_singular_vectors=False, random_state=0)[0])


class Alignment(NamedTuple):
    raw: float
    cosine: float


def alignment(u, v, normalized: bool = True) -> Alignment:
    """Raw inner product and absolute cosine of two vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    raw = float(u @ v)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        if normalized:
            raise DegenerateInputError("zero vector has no direction")
        return Alignment(raw, float("nan"))
    return Alignment(raw, min(1.0, abs(raw) / (nu * nv)))


@dataclass(frozen=True, eq=False)
class AlignmentTable:
    """Absolute cosines of named vectors against each target direction."""

    row_names: tuple[str, ...]
    target_names: tuple[str, ...]
    entries: np.ndarray = field(repr=False)

    def value(self, row: str, target: int = 0) -> float:
        return float(self.entries[self.row_names.index(row), target])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vector", *self.target_names])
            for name, row in zip(self.row_names, self.entries):
                w.writerow([name, *(repr(float(x)) for x in row)])

    def to_dict(self) -> dict:
        return {r: dict(zip(self.target_names, map(float, row))) for r, row in zip(self.row_names, self.entries)}


def alignment_table(
    right_vectors: Sequence[np.ndarray],
    targets: np.ndarray,
    extra: dict[str, np.ndarray] | None = None,
    prefix: str = "v",
    names: Sequence[str] | None = None,
) -> AlignmentTable:
    """Rows are ``names`` (default ``v1, v2, ...``) followed by the ``extra`` keys."""
    targets = np.atleast_2d(targets)
    rows = []
    names = [f"{prefix}{i + 1}" for i in range(len(right_vectors))] if names is None else list(names)
    if len(names) != len(right_vectors):
        raise ValueError("one name per right vector")
    for v in right_vectors:
        rows.append([alignment(v, t).cosine for t in targets])
    for name, v in (extra or {}).items():
        names.append(name)
        rows.append([alignment(v, t, normalized=False).cosine for t in targets])
    tnames = tuple(f"beta_star_{p + 1}" for p in range(targets.shape[0]))
    return AlignmentTable(tuple(names), tnames, np.array(rows, dtype=float).reshape(len(rows), len(tnames)))


def hermite_feature_norm_check(W0, X, k: int) -> float:
    """``||He_k(W0 X^T)||_op / sqrt(N)``."""
    if not 1 <= k <= 6:
        raise ValueError("k must be in 1..6")
    W0 = np.asarray(W0, dtype=float)
    F = hermite_eval(k, W0 @ np.asarray(X, dtype=float).T)
    return float(np.linalg.norm(F, 2) / np.sqrt(W0.shape[0]))
