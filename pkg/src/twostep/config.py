"""JSON experiment configuration.

Precedence when resolving a config: command-line flags, then environment
variables (``TWOSTEP_SEED``, ``TWOSTEP_OUTPUT_DIR``), then the file, then the
defaults below.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .activation import SpecError, parse
from .trainer import BatchPlan, StepSchedule

ENV_SEED = "TWOSTEP_SEED"
ENV_OUTPUT = "TWOSTEP_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class Sizes:
    n: int = 4000
    d: int = 1400
    N: int = 2000


@dataclass
class Schedule:
    alpha1: float = 0.3
    alpha2: float = 0.4
    eta_base1: float = 1.0
    eta_base2: float = 1.0


@dataclass
class Batch:
    mode: str = "reused"
    xi1: float = 1.0
    xi2: float = 1.0


@dataclass
class Teacher:
    links: list = field(default_factory=lambda: ["hermite:0,0,1"])
    noise_sigma: float = 0.0
    raw_gaussian_directions: bool = False


@dataclass
class Scaling:
    N_list: list = field(default_factory=lambda: [500, 1000, 2000, 4000])
    seeds: int = 5


@dataclass
class Sweep:
    """Alignment-limit sweep over d at fixed n (no network involved)."""

    d_list: list = field(default_factory=list)
    q: int = 2
    p: int = 0


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    sizes: Sizes = field(default_factory=Sizes)
    schedule: Schedule = field(default_factory=Schedule)
    batch: Batch = field(default_factory=Batch)
    teacher: Teacher = field(default_factory=Teacher)
    activation: Any = "tanh"
    hermite_degree: int = 7
    seed: int = 0
    seeds_count: int = 1
    margin: float = 0.05
    output_dir: str = "runs/experiment"
    deterministic: bool = True
    jobs: int = 1
    scaling: Scaling = field(default_factory=Scaling)
    sweep: Sweep = field(default_factory=Sweep)

    @property
    def phi(self) -> float:
        return self.sizes.d / self.sizes.n

    def to_dict(self) -> dict:
        out = asdict(self)
        out["phi"] = self.phi
        return out

    def checksum(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def step_schedule(self) -> StepSchedule:
        return StepSchedule(**asdict(self.schedule))

    def batch_plan(self) -> BatchPlan:
        return BatchPlan(**asdict(self.batch))

    def with_sizes(self, N: int, n: int, d: int) -> "ExperimentConfig":
        c = copy.deepcopy(self)
        c.sizes = Sizes(n=n, d=d, N=N)
        return c

    def validate(self) -> list[str]:
        errs = []
        s = self.sizes
        for k in ("n", "d", "N"):
            v = getattr(s, k)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                errs.append(f"sizes.{k}: expected positive integer, got {v!r}")
        for k in ("alpha1", "alpha2"):
            v = getattr(self.schedule, k)
            if not isinstance(v, (int, float)) or not 0.0 <= v < 0.5:
                errs.append(f"schedule.{k}: must lie in [0, 0.5), got {v!r}")
        for k in ("eta_base1", "eta_base2"):
            v = getattr(self.schedule, k)
            if not isinstance(v, (int, float)) or v < 0:
                errs.append(f"schedule.{k}: must be a nonnegative number, got {v!r}")
        b = self.batch
        if b.mode == "reused":
            if b.xi1 != 1 or b.xi2 != 1:
                errs.append("batch: reused mode requires xi1 = xi2 = 1")
        elif b.mode == "fresh":
            if not (isinstance(b.xi1, (int, float)) and isinstance(b.xi2, (int, float))) or b.xi1 <= 0 or b.xi2 <= 0:
                errs.append("batch: fresh mode requires xi1, xi2 > 0")
            elif not math.isclose(b.xi1 + b.xi2, 1.0, abs_tol=1e-12):
                errs.append(f"batch: xi1 + xi2 must equal 1, got {b.xi1 + b.xi2}")
        else:
            errs.append(f"batch.mode: expected 'reused' or 'fresh', got {b.mode!r}")
        t = self.teacher
        if not isinstance(t.links, list) or len(t.links) == 0:
            errs.append("teacher.links: need at least one link (M >= 1)")
        else:
            if isinstance(s.d, int) and len(t.links) > s.d:
                errs.append(f"teacher.links: M={len(t.links)} exceeds d={s.d}")
            for i, spec in enumerate(t.links):
                try:
                    g = parse(spec, max(1, int(self.hermite_degree)))
                except (SpecError, ValueError) as exc:
                    errs.append(f"teacher.links[{i}]: {exc}")
                    continue
                if g.series.is_zero():
                    errs.append(f"teacher.links[{i}]: all-zero link (degenerate teacher)")
        if not isinstance(t.noise_sigma, (int, float)) or t.noise_sigma < 0:
            errs.append(f"teacher.noise_sigma: must be >= 0, got {t.noise_sigma!r}")
        if not isinstance(self.hermite_degree, int) or not 1 <= self.hermite_degree <= 20:
            errs.append(f"hermite_degree: expected integer in 1..20, got {self.hermite_degree!r}")
        else:
            try:
                parse(self.activation, self.hermite_degree)
            except (SpecError, ValueError) as exc:
                errs.append(f"activation: {exc}")
        if not isinstance(self.seed, int) or self.seed < 0:
            errs.append(f"seed: expected nonnegative integer, got {self.seed!r}")
        if not isinstance(self.seeds_count, int) or self.seeds_count < 1:
            errs.append(f"seeds_count: expected positive integer, got {self.seeds_count!r}")
        if not isinstance(self.margin, (int, float)) or self.margin <= 0:
            errs.append(f"margin: must be positive, got {self.margin!r}")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            errs.append(f"jobs: expected positive integer, got {self.jobs!r}")
        return errs


_NESTED = {"sizes": Sizes, "schedule": Schedule, "batch": Batch, "teacher": Teacher, "scaling": Scaling, "sweep": Sweep}


def from_dict(raw: dict) -> ExperimentConfig:
    errs = []
    known = {f.name for f in fields(ExperimentConfig)} | {"phi"}
    for k in raw:
        if k not in known:
            errs.append(f"{k}: unknown field")
    kwargs = {}
    for k, v in raw.items():
        if k == "phi" or k not in known:
            continue
        if k in _NESTED:
            cls = _NESTED[k]
            if not isinstance(v, dict):
                errs.append(f"{k}: expected an object")
                continue
            sub_known = {f.name for f in fields(cls)}
            bad = [sk for sk in v if sk not in sub_known]
            errs.extend(f"{k}.{sk}: unknown field" for sk in bad)
            kwargs[k] = cls(**{sk: sv for sk, sv in v.items() if sk in sub_known})
        else:
            kwargs[k] = v
    cfg = ExperimentConfig(**kwargs)
    errs.extend(cfg.validate())
    if errs:
        raise ConfigError(errs)
    return cfg


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: dict[str, Any]) -> dict:
    """Set dotted keys (``schedule.alpha1``) on a raw config dict."""
    raw = copy.deepcopy(raw)
    for key, value in overrides.items():
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return raw


def env_overrides(environ=None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    out = {}
    if environ.get(ENV_SEED):
        out["seed"] = _coerce(environ[ENV_SEED])
    if environ.get(ENV_OUTPUT):
        out["output_dir"] = environ[ENV_OUTPUT]
    return out


def load_config(path, flags: dict[str, Any] | None = None, environ=None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError([f"{path}: file not found"])
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"])
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    raw = apply_overrides(raw, env_overrides(environ))
    raw = apply_overrides(raw, flags or {})
    return from_dict(raw)


def parse_set_args(items: list[str]) -> dict[str, Any]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError([f"--set {item!r}: expected key=value"])
        k, v = item.split("=", 1)
        out[k.strip()] = _coerce(v)
    return out
