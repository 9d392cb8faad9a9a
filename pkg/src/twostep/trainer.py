"""Correlation loss, its first-layer gradient, and the two-step update."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .activation import Nonlinearity
from .model import Dataset, NetworkInit


class DegenerateSignError(ArithmeticError):
    """The label/output correlation is exactly zero, so sign(.) is undefined."""


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class StepSchedule:
    alpha1: float
    alpha2: float
    eta_base1: float = 1.0
    eta_base2: float = 1.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            a = getattr(self, name)
            if not 0.0 <= a < 0.5:
                raise ValueError(f"{name}={a} outside [0, 0.5)")
        if self.eta_base1 < 0 or self.eta_base2 < 0:
            raise ValueError("step-size base constants must be nonnegative")

    def etas(self, N: int) -> tuple[float, float]:
        return self.eta_base1 * N**self.alpha1, self.eta_base2 * N**self.alpha2


@dataclass(frozen=True)
class BatchPlan:
    mode: str = "reused"
    xi1: float = 1.0
    xi2: float = 1.0

    def __post_init__(self):
        if self.mode == "reused":
            if self.xi1 != 1.0 or self.xi2 != 1.0:
                raise ValueError("reused mode requires xi1 = xi2 = 1")
        elif self.mode == "fresh":
            if self.xi1 <= 0 or self.xi2 <= 0 or not math.isclose(self.xi1 + self.xi2, 1.0, abs_tol=1e-12):
                raise ValueError("fresh mode requires xi1, xi2 > 0 with xi1 + xi2 = 1")
        else:
            raise ValueError(f"unknown batch mode {self.mode!r}")

    @classmethod
    def fresh(cls, xi1: float = 0.5) -> "BatchPlan":
        return cls("fresh", xi1, 1.0 - xi1)

    def split(self, n: int) -> tuple[slice, slice]:
        """Row ranges of the two batches; fresh mode floors batch 1."""
        if self.mode == "reused":
            return slice(0, n), slice(0, n)
        n1 = int(math.floor(self.xi1 * n))
        if n1 < 1 or n1 >= n:
            raise ValueError(f"xi1={self.xi1} leaves an empty batch for n={n}")
        return slice(0, n1), slice(n1, n)

    def batches(self, data: Dataset) -> tuple[Dataset, Dataset]:
        s1, s2 = self.split(data.n)
        return data.rows(s1), data.rows(s2)


def _check_shapes(W, a, X, y):
    if W.ndim != 2 or X.ndim != 2 or a.ndim != 1 or y.ndim != 1:
        raise DimensionError("expected W, X matrices and a, y vectors")
    N, d = W.shape
    if a.shape[0] != N:
        raise DimensionError(f"a has length {a.shape[0]}, W has {N} rows")
    if X.shape[1] != d:
        raise DimensionError(f"X has {X.shape[1]} columns, W has {d}")
    if y.shape[0] != X.shape[0]:
        raise DimensionError(f"y has length {y.shape[0]}, X has {X.shape[0]} rows")


def corr_loss(W, a, X, y, act: Nonlinearity) -> float:
    """``1 - |y^T act(X W^T) a| / n``."""
    W, a, X, y = map(np.asarray, (W, a, X, y))
    _check_shapes(W, a, X, y)
    return 1.0 - abs(y @ (act(X @ W.T) @ a)) / X.shape[0]


def corr_gradient(W, a, X, y, act: Nonlinearity, path: str = "diag") -> tuple[np.ndarray, int]:
    """Gradient of :func:`corr_loss` in ``W`` and the realized sign factor.

    ``path="masked"`` forms ``(a y^T) * act'(W X^T)`` explicitly; ``"diag"``
    uses ``diag(a) act'(W X^T) diag(y)``. Both give the same matrix.
    """
    W, a, X, y = map(np.asarray, (W, a, X, y))
    _check_shapes(W, a, X, y)
    n = X.shape[0]
    P = X @ W.T  # (n, N)
    corr = y @ (act(P) @ a)
    if corr == 0 or not np.isfinite(corr):
        raise DegenerateSignError(f"label/output correlation is {corr}")
    s = 1 if corr > 0 else -1
    D = act.deriv(P)  # (n, N)
    if path == "masked":
        M = np.outer(a, y) * D.T
        G = M @ X
    elif path == "diag":
        G = a[:, None] * (D.T @ (y[:, None] * X))
    else:
        raise ValueError(f"unknown path {path!r}")
    return (-s / n) * G, s


@dataclass(frozen=True, eq=False)
class WeightTrajectory:
    W0: np.ndarray = field(repr=False)
    W1: np.ndarray = field(repr=False)
    W2: np.ndarray = field(repr=False)
    a0: np.ndarray = field(repr=False)
    grad1: np.ndarray = field(repr=False)
    grad2: np.ndarray = field(repr=False)
    sign1: int
    sign2: int
    eta1: float
    eta2: float
    schedule: StepSchedule
    plan: BatchPlan
    n: int

    def __post_init__(self):
        for name in ("W0", "W1", "W2", "a0", "grad1", "grad2"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"{name} has non-finite entries")
            arr.flags.writeable = False
        if self.sign1 not in (-1, 1) or self.sign2 not in (-1, 1):
            raise ValueError("sign factors must be +-1")

    @property
    def N(self) -> int:
        return self.W0.shape[0]

    @property
    def d(self) -> int:
        return self.W0.shape[1]

    def save(self, directory, extra: dict | None = None) -> Path:
        """Write little-endian float64 row-major dumps plus ``meta.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = {}
        for name in ("W0", "W1", "W2", "a0", "grad1", "grad2"):
            arr = np.ascontiguousarray(getattr(self, name), dtype="<f8")
            arr.tofile(directory / f"{name}.bin")
            arrays[name] = list(arr.shape)
        meta = {
            "format": "float64-le-row-major",
            "arrays": arrays,
            "sign1": self.sign1,
            "sign2": self.sign2,
            "eta1": self.eta1,
            "eta2": self.eta2,
            "n": self.n,
            "schedule": asdict(self.schedule),
            "plan": asdict(self.plan),
        }
        if extra:
            meta.update(extra)
        (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return directory

    @classmethod
    def load(cls, directory) -> "WeightTrajectory":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        arrs = {
            name: np.fromfile(directory / f"{name}.bin", dtype="<f8").reshape(shape)
            for name, shape in meta["arrays"].items()
        }
        return cls(
            **arrs,
            sign1=meta["sign1"],
            sign2=meta["sign2"],
            eta1=meta["eta1"],
            eta2=meta["eta2"],
            schedule=StepSchedule(**meta["schedule"]),
            plan=BatchPlan(**meta["plan"]),
            n=meta["n"],
        )


def two_step_train(
    init: NetworkInit,
    data: Dataset,
    act: Nonlinearity,
    sched: StepSchedule,
    plan: BatchPlan,
) -> WeightTrajectory:
    """Two gradient steps on ``W`` with ``a`` frozen at ``a0``."""
    eta1, eta2 = sched.etas(init.N)
    b1, b2 = plan.batches(data)
    g1, s1 = corr_gradient(init.W0, init.a0, b1.X, b1.y, act)
    W1 = init.W0 - eta1 * g1
    g2, s2 = corr_gradient(W1, init.a0, b2.X, b2.y, act)
    W2 = W1 - eta2 * g2
    return WeightTrajectory(
        W0=init.W0, W1=W1, W2=W2, a0=init.a0, grad1=g1, grad2=g2,
        sign1=s1, sign2=s2, eta1=eta1, eta2=eta2, schedule=sched, plan=plan, n=data.n,
    )
