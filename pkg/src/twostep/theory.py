"""Closed-form predictions for the two-step trajectory.

Covers the spike count after the second step, the learned directions, the
low-rank expansions of the second gradient and of ``W2``, residual-scaling
sweeps, and the limiting alignments of the nonlinear learned directions with
the teacher directions.

Sign convention: the trainer records the realized sign ``s_t`` of the
label/output correlation at each step. The first gradient is approximately
``-s1 c1 a0 beta_hat_1^T`` and the second one picks up ``s2 (s1 c1 eta1)^k``
on its ``k``-th term, so every prediction here carries those factors.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rng_mod
from .activation import Nonlinearity, parse
from .hermite import MAX_MOMENT, ZERO_TOL, HermiteSeries, MomentOverflowError, gaussian_expectation
from .model import Dataset, TeacherSpec, generate_dataset, init_network, make_teacher
from .moments import Poly
from .spectral import operator_norm_fast
from .trainer import WeightTrajectory, two_step_train

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-9
MIN_MC_SAMPLES = 10_000
DEFAULT_MC_SAMPLES = 1_000_000
MC_CHUNK = 200_000


class DomainError(ValueError):
    pass


class UnsupportedLinkError(ValueError):
    pass


class ScalingFitError(ArithmeticError):
    pass


class BoundaryWarning(UserWarning):
    pass


# ---------------------------------------------------------------- spike count


def lambda_outliers(alpha1: float, alpha2: float, L: int) -> int:
    """Number of extra spike directions after the second step.

    ``min(L - 1, floor(alpha2 / (1/2 - alpha1)))``. A ratio within ``1e-9`` of an
    integer counts as that integer (so float noise cannot drop a level) and
    triggers a :class:`BoundaryWarning`, since such scalings sit on the edge of
    the regime the formula describes.
    """
    for name, a in (("alpha1", alpha1), ("alpha2", alpha2)):
        if not 0.0 <= a < 0.5:
            raise DomainError(f"{name}={a} outside [0, 0.5)")
    if L < 1:
        raise DomainError("L must be >= 1")
    ratio = alpha2 / (0.5 - alpha1)
    r = round(ratio)
    if abs(ratio - r) <= BOUNDARY_TOL and r > 0:
        warnings.warn(
            f"alpha2/(1/2 - alpha1) = {ratio!r} is on an integer boundary",
            BoundaryWarning,
            stacklevel=2,
        )
        # Treat float noise around an exact integer ratio as the integer itself.
        return min(L - 1, r)
    return min(L - 1, math.floor(ratio))


def lambda_grid(L: int = 7, size: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """``Lambda`` on a ``size x size`` grid ``alpha_i = i / (2 size)``; rows index alpha1."""
    alphas = np.arange(size) * (0.5 / size)
    grid = np.empty((size, size), dtype=int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        for i, a1 in enumerate(alphas):
            for j, a2 in enumerate(alphas):
                grid[i, j] = lambda_outliers(float(a1), float(a2), L)
    return alphas, grid


# --------------------------------------------------------- learned directions


@dataclass(frozen=True, eq=False)
class LearnedDirections:
    beta_hat_1: np.ndarray = field(repr=False)
    beta_hat_2: tuple[np.ndarray, ...] = field(repr=False)  # index k = 0..L-1

    @property
    def L(self) -> int:
        return len(self.beta_hat_2)


def learned_directions(batch1: Dataset, batch2: Dataset, L: int) -> LearnedDirections:
    """``X1^T y1 / n1`` and ``X2^T (y2 * (X2 b1)^k) / n2`` for ``k < L``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    b1 = batch1.X.T @ batch1.y / batch1.n
    proj = batch2.X @ b1
    w = batch2.y.copy()
    out = []
    for _ in range(L):
        out.append(batch2.X.T @ w / batch2.n)
        w = w * proj
    for v in (b1, *out):
        v.flags.writeable = False
    return LearnedDirections(b1, tuple(out))


def trajectory_directions(traj: WeightTrajectory, data: Dataset, L: int) -> LearnedDirections:
    """Learned directions for the batches ``traj`` was trained on."""
    if data.n != traj.n or data.d != traj.d:
        raise ValueError(f"dataset is {data.n}x{data.d}, trajectory expects {traj.n}x{traj.d}")
    b1, b2 = traj.plan.batches(data)
    return learned_directions(b1, b2, L)


# ------------------------------------------------------- low-rank expansions


@dataclass(frozen=True, eq=False)
class RankOneTerm:
    """``scale * left right^T``."""

    scale: float
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    label: str = ""

    def matrix(self) -> np.ndarray:
        return self.scale * np.outer(self.left, self.right)

    def op_norm(self) -> float:
        return abs(self.scale) * float(np.linalg.norm(self.left)) * float(np.linalg.norm(self.right))


def _sum_terms(base: np.ndarray | None, terms: Sequence[RankOneTerm], shape) -> np.ndarray:
    out = np.zeros(shape) if base is None else np.array(base, dtype=float, copy=True)
    for t in terms:
        out += t.matrix()
    return out


def gradient2_terms(
    a0, eta1: float, series: HermiteSeries, dirs: LearnedDirections,
    sign1: int = 1, sign2: int = 1, L: int | None = None,
) -> list[RankOneTerm]:
    """Rank-one pieces of the second-gradient approximation, ``k = 0..L-1``."""
    L = series.degree if L is None else L
    if dirs.L < L:
        raise ValueError(f"need beta_hat_2 up to k={L - 1}, have {dirs.L}")
    a0 = np.asarray(a0, dtype=float)
    c1 = series[1]
    terms = []
    for k in range(L):
        ck = series[k + 1]
        if abs(ck) <= ZERO_TOL:
            continue
        scale = -sign2 * (k + 1) * ck * (sign1 * c1 * eta1) ** k
        terms.append(RankOneTerm(scale, a0 ** (k + 1), dirs.beta_hat_2[k], f"k={k}"))
    return terms


def predict_gradient2(
    a0, eta1: float, series: HermiteSeries, dirs: LearnedDirections,
    sign1: int = 1, sign2: int = 1, L: int | None = None,
) -> np.ndarray:
    """``-s2 sum_k (k+1) c_{k+1} (s1 c1 eta1)^k a0^(k+1) beta_hat_{2;k}^T``."""
    terms = gradient2_terms(a0, eta1, series, dirs, sign1, sign2, L)
    a0 = np.asarray(a0)
    return _sum_terms(None, terms, (a0.shape[0], dirs.beta_hat_1.shape[0]))


@dataclass(frozen=True, eq=False)
class ExpansionPrediction:
    lam: int
    W0: np.ndarray = field(repr=False)
    terms: tuple[RankOneTerm, ...] = field(repr=False)
    residual_op_norm: float = float("nan")

    @property
    def predicted_W2(self) -> np.ndarray:
        return _sum_terms(self.W0, self.terms, self.W0.shape)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "terms": [{"label": t.label, "scale": t.scale, "op_norm": t.op_norm()} for t in self.terms],
            "residual_op_norm": self.residual_op_norm,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def predict_W2(
    traj: WeightTrajectory,
    dirs: LearnedDirections,
    series: HermiteSeries,
    L: int | None = None,
    norm: Callable[[np.ndarray], float] = operator_norm_fast,
) -> ExpansionPrediction:
    """Spike expansion of ``W2`` with ``Lambda`` extra terms, plus its residual."""
    L = series.degree if L is None else L
    lam = lambda_outliers(traj.schedule.alpha1, traj.schedule.alpha2, L)
    if dirs.L < lam + 1:
        raise ValueError(f"need beta_hat_2 up to k={lam}, have {dirs.L}")
    s1, s2, e1, e2 = traj.sign1, traj.sign2, traj.eta1, traj.eta2
    a0 = np.asarray(traj.a0)
    c1 = series[1]
    terms = [RankOneTerm(c1, a0, s1 * e1 * dirs.beta_hat_1 + s2 * e2 * dirs.beta_hat_2[0], "k=0")]
    for k in range(1, lam + 1):
        if abs(series[k + 1]) <= ZERO_TOL:
            continue
        scale = s2 * s1**k * (k + 1) * series[k + 1] * c1**k * e2 * e1**k
        terms.append(RankOneTerm(scale, a0 ** (k + 1), dirs.beta_hat_2[k], f"k={k}"))
    pred = ExpansionPrediction(lam, np.asarray(traj.W0), tuple(terms))
    resid = norm(traj.W2 - pred.predicted_W2)
    return ExpansionPrediction(lam, pred.W0, pred.terms, float(resid))


def one_step_residual(traj: WeightTrajectory, dirs: LearnedDirections, series: HermiteSeries,
                      norm: Callable[[np.ndarray], float] = operator_norm_fast) -> float:
    """``||W1 - W0 - s1 c1 eta1 a0 beta_hat_1^T||_op``."""
    spike = (traj.sign1 * series[1] * traj.eta1) * np.outer(traj.a0, dirs.beta_hat_1)
    return float(norm(traj.W1 - traj.W0 - spike))


def gradient2_residual(traj: WeightTrajectory, dirs: LearnedDirections, series: HermiteSeries,
                       L: int | None = None, norm: Callable[[np.ndarray], float] = operator_norm_fast) -> float:
    """``||grad2 - G||_op`` with the realized signs."""
    G = predict_gradient2(traj.a0, traj.eta1, series, dirs, traj.sign1, traj.sign2, L)
    return float(norm(traj.grad2 - G))


def collapsed_residual(traj: WeightTrajectory, dirs: LearnedDirections, series: HermiteSeries,
                       norm: Callable[[np.ndarray], float] = operator_norm_fast) -> float:
    """``||W2 - W0 - c1 a0 (s1 eta1 + s2 eta2) beta_hat_1^T||_op``.

    The single-spike form that the expansion reduces to when
    ``alpha1 + alpha2 < 1/2`` and both steps see the same batch.
    """
    w = traj.sign1 * traj.eta1 + traj.sign2 * traj.eta2
    spike = series[1] * w * np.outer(traj.a0, dirs.beta_hat_1)
    return float(norm(traj.W2 - traj.W0 - spike))


# ---------------------------------------------------------- residual scaling


RESIDUAL_KINDS = ("one_step", "gradient2")


@dataclass(frozen=True)
class ScalingResult:
    kind: str
    N: tuple[int, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    slope: float

    def slopes_so_far(self) -> list[float]:
        """Slope of the fit over the first ``i + 1`` sizes (NaN below 3 points)."""
        out = []
        for i in range(len(self.N)):
            try:
                out.append(fit_slope(self.N[: i + 1], self.means[: i + 1]))
            except ScalingFitError:
                out.append(float("nan"))
        return out


def fit_slope(N: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(N)``."""
    N = np.asarray(N, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v) & (v > 0) & (N > 0)
    if ok.sum() < 3 or len(np.unique(N[ok])) < 3:
        raise ScalingFitError(f"need at least 3 positive finite points to fit a slope, have {int(ok.sum())}")
    return float(np.polyfit(np.log(N[ok]), np.log(v[ok]), 1)[0])


def scaled_sizes(template, N: int) -> tuple[int, int]:
    """``(d, n)`` at width ``N`` keeping the template's ``d/N`` and ``n/N``."""
    s = template.sizes
    return max(1, round(N * s.d / s.N)), max(1, round(N * s.n / s.N))


def residual_scaling(
    template,
    N_list: Sequence[int],
    seeds: int,
    kinds: Sequence[str] = RESIDUAL_KINDS,
    norm: Callable[[np.ndarray], float] = operator_norm_fast,
    progress: Callable[[str], None] | None = None,
) -> dict[str, ScalingResult]:
    """Mean residual norms over ``seeds`` draws per width and their log-log slopes.

    ``template`` is an :class:`~twostep.config.ExperimentConfig`; its seed is
    the first of ``seeds`` consecutive seeds.
    """
    N_list = sorted(int(N) for N in N_list)
    if len(set(N_list)) < 3:
        raise ScalingFitError("residual scaling needs at least 3 distinct widths")
    if N_list[-1] < 4 * N_list[0]:
        raise ScalingFitError("widths must span at least a factor of 4")
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    for k in kinds:
        if k not in RESIDUAL_KINDS:
            raise ValueError(f"unknown residual kind {k!r}")
    act = parse(template.activation, template.hermite_degree).centered()
    sched, plan = template.step_schedule(), template.batch_plan()
    L = act.series.degree
    t = template.teacher
    per: dict[str, list[list[float]]] = {k: [] for k in kinds}
    for N in N_list:
        d, n = scaled_sizes(template, N)
        vals: dict[str, list[float]] = {k: [] for k in kinds}
        for s in range(seeds):
            seed = template.seed + s
            teacher = make_teacher(len(t.links), t.links, t.noise_sigma, d, seed,
                                   t.raw_gaussian_directions, template.hermite_degree)
            data = generate_dataset(teacher, n, seed)
            traj = two_step_train(init_network(N, d, seed), data, act, sched, plan)
            dirs = trajectory_directions(traj, data, L)
            if "one_step" in kinds:
                vals["one_step"].append(one_step_residual(traj, dirs, act.series, norm))
            if "gradient2" in kinds:
                vals["gradient2"].append(gradient2_residual(traj, dirs, act.series, L, norm))
        for k in kinds:
            per[k].append(vals[k])
        if progress:
            progress(f"N={N} " + " ".join(f"{k}={np.mean(vals[k]):.4g}" for k in kinds))
    out = {}
    for k in kinds:
        means = tuple(float(np.mean(v)) for v in per[k])
        stds = tuple(float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for v in per[k])
        out[k] = ScalingResult(k, tuple(N_list), means, stds, fit_slope(N_list, means))
    return out


# ------------------------------------------------------- alignment limits


def theory_teacher(link_specs: Sequence, noise_sigma: float = 0.0, degree: int = 7) -> TeacherSpec:
    """A teacher for the limit formulas, which only read the links and noise level."""
    links = tuple(parse(s, degree) for s in link_specs)
    return TeacherSpec(links, np.eye(len(links)), float(noise_sigma))


def second_moment_y(teacher: TeacherSpec) -> float:
    """``E[y^2]``: exact for polynomial links, Gauss-Hermite otherwise."""
    means, squares = [], []
    for g in teacher.links:
        if g.polynomial:
            means.append(g.series[0])
            squares.append(g.series.second_moment())
        else:
            means.append(gaussian_expectation(g.fn))
            squares.append(gaussian_expectation(lambda z, f=g.fn: f(z) ** 2))
    total = sum(means) ** 2 - sum(m * m for m in means) + sum(squares)
    return float(teacher.noise_sigma**2 + total)


def rho_norm_limit(teacher: TeacherSpec, phi: float) -> float:
    """Limit of ``||X^T y / n - sum_p c_{g_p,1} beta_p||^2``, which is ``phi E[y^2]``."""
    if phi <= 0:
        raise ValueError("phi must be positive")
    return phi * second_moment_y(teacher)


def empirical_rho(data: Dataset, teacher: TeacherSpec) -> np.ndarray:
    """``X^T y / n`` minus its population mean ``sum_p c_{g_p,1} beta_p``."""
    c1 = np.array([g.series[1] for g in teacher.links])
    return data.X.T @ data.y / data.n - c1 @ teacher.directions


@dataclass(frozen=True)
class AlignmentIntegrand:
    """``z_p * y * T^q`` with ``T = w_y y + sum_k c_{g_k,1} z_k + G``.

    Reused batches have ``w_y = phi`` and ``Var G = phi E[y^2]``; fresh batches
    drop the ``y`` term and use ``Var G = phi E[y^2] / xi1``.
    """

    p: int
    q: int
    links: tuple[Nonlinearity, ...]
    noise_sigma: float
    y_weight: float
    lin: tuple[float, ...]
    g_var: float

    @property
    def M(self) -> int:
        return len(self.links)

    def poly(self) -> Poly:
        """Variables ``z_1..z_M, e, g`` (all standard) with ``eps = sigma e``, ``G = sqrt(var) g``."""
        nv = self.M + 2
        y = Poly.var(nv, self.M, self.noise_sigma)
        for k, g in enumerate(self.links):
            y = y + Poly.hermite(nv, k, g.series)
        T = y.scale(self.y_weight) + Poly.var(nv, self.M + 1, math.sqrt(self.g_var))
        for k, c in enumerate(self.lin):
            T = T + Poly.var(nv, k, c)
        deg = 1 + y.degree + self.q * T.degree
        if deg > MAX_MOMENT:
            raise MomentOverflowError(f"integrand degree {deg} exceeds moment-table limit {MAX_MOMENT}")
        return Poly.var(nv, self.p) * y * T**self.q

    def evaluate(self, Z: np.ndarray, e: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Integrand at standard-normal draws; ``Z`` has shape ``(M, S)``."""
        y = self.noise_sigma * e
        T = math.sqrt(self.g_var) * g
        for k, link in enumerate(self.links):
            y = y + link(Z[k])
            if self.lin[k]:
                T = T + self.lin[k] * Z[k]
        T = T + self.y_weight * y
        return Z[self.p] * y * T**self.q


def alignment_integrand(p: int, q: int, mode: str, teacher: TeacherSpec, phi: float, xi2: float = 0.5) -> AlignmentIntegrand:
    """The one place both limit paths get their integrand from."""
    if not 0 <= p < teacher.M:
        raise IndexError(f"p={p} outside 0..{teacher.M - 1}")
    if q < 0:
        raise ValueError("q must be >= 0")
    if phi <= 0:
        raise ValueError("phi must be positive")
    ey2 = second_moment_y(teacher)
    lin = tuple(g.series[1] for g in teacher.links)
    if mode == "reused":
        return AlignmentIntegrand(p, q, teacher.links, teacher.noise_sigma, phi, lin, phi * ey2)
    if mode == "fresh":
        if not 0.0 < xi2 < 1.0:
            raise ValueError("fresh mode needs 0 < xi2 < 1")
        # G is x^T rho with rho built from the first batch, of size (1 - xi2) n.
        return AlignmentIntegrand(p, q, teacher.links, teacher.noise_sigma, 0.0, lin, phi * ey2 / (1.0 - xi2))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class AlignmentLimit:
    value: float
    std_error: float
    method: str
    params: dict

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "method": self.method, "params": self.params}


def _mc_mean(integrand: AlignmentIntegrand, samples: int, seed: int) -> tuple[float, float]:
    """Antithetic Monte Carlo: each pair is ``(x, -x)``; SE from pair means."""
    pairs = samples // 2
    chunks = [min(MC_CHUNK, pairs - i) for i in range(0, pairs, MC_CHUNK)]
    streams = rng_mod.substreams(seed, rng_mod.MONTE_CARLO, len(chunks))
    s1 = s2 = 0.0
    for size, gen in zip(chunks, streams):
        Z = gen.standard_normal((integrand.M, size))
        e = gen.standard_normal(size)
        g = gen.standard_normal(size)
        v = 0.5 * (integrand.evaluate(Z, e, g) + integrand.evaluate(-Z, -e, -g))
        s1 += float(np.sum(v))
        s2 += float(np.sum(v * v))
    mean = s1 / pairs
    var = max(s2 / pairs - mean * mean, 0.0) * pairs / max(pairs - 1, 1)
    return mean, math.sqrt(var / pairs)


def theory_alignment(
    p: int,
    q: int,
    mode: str,
    teacher: TeacherSpec,
    phi: float,
    xi2: float = 0.5,
    method: str = "exact",
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
) -> AlignmentLimit:
    """Limit of ``beta_p^T beta_hat_{2;q}`` (raw inner product, 0-based ``p``)."""
    integrand = alignment_integrand(p, q, mode, teacher, phi, xi2)
    params = {
        "p": p, "q": q, "mode": mode, "phi": phi, "xi2": xi2 if mode == "fresh" else None,
        "links": [g.name for g in teacher.links], "noise_sigma": teacher.noise_sigma,
    }
    if method == "exact":
        bad = [g.name for g in teacher.links if not g.polynomial]
        if bad:
            raise UnsupportedLinkError(f"exact path needs polynomial links; got {bad}")
        return AlignmentLimit(integrand.poly().expectation(), 0.0, "exact-moment", params)
    if method == "mc":
        if mc_samples < MIN_MC_SAMPLES:
            raise ValueError(f"mc_samples={mc_samples} below minimum {MIN_MC_SAMPLES}")
        mean, se = _mc_mean(integrand, int(mc_samples), seed)
        params["mc_samples"] = int(mc_samples)
        params["seed"] = seed
        return AlignmentLimit(mean, se, "monte-carlo", params)
    raise ValueError(f"unknown method {method!r}")


def empirical_alignment(data: Dataset, teacher: TeacherSpec, q: int, p: int = 0) -> float:
    """``beta_p^T beta_hat_{2;q}`` with both steps on ``data`` (reused batch)."""
    dirs = learned_directions(data, data, q + 1)
    return float(teacher.directions[p] @ dirs.beta_hat_2[q])
