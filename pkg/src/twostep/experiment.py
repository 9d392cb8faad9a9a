"""Config-driven simulation pipeline and the figure reproductions.

Per seed the pipeline runs init -> data -> two steps -> spectra of W0/W1/W2 ->
alignments -> theory predictions -> residuals, and writes into
``<output_dir>/seed_<seed>/``:

* ``record.json``: resolved config, checksum, sub-stream labels, results and
  the sha256 of every other file written for that seed
* ``spectrum_W{0,1,2}.json`` and ``hist_W{0,1,2}.csv``
* ``alignment.csv``
* ``W{0,1,2}.svg``
* ``timings.json`` (wall clock; kept apart so the rest is reproducible byte for byte)
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .activation import parse
from .config import ExperimentConfig
from .model import generate_dataset, init_network, make_teacher
from .spectral import SpectrumReport, alignment, alignment_table, svd_spectrum
from .svg import histogram_svg
from .theory import (
    UnsupportedLinkError,
    collapsed_residual,
    empirical_alignment,
    gradient2_residual,
    lambda_grid,
    one_step_residual,
    predict_W2,
    residual_scaling,
    theory_alignment,
    trajectory_directions,
)
from .trainer import DegenerateSignError, two_step_train

log = logging.getLogger(__name__)

STEPS = ("W0", "W1", "W2")
HIST_BINS = 60
KEEP_VECTORS = 3


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config": cfg.to_dict(), "config_sha256": cfg.checksum()}


@dataclass
class SeedResult:
    seed: int
    outliers: dict
    v2_cosine: float
    record_path: str

    def row(self) -> list:
        return [self.seed, *(self.outliers[s] for s in STEPS), repr(self.v2_cosine)]


def run_seed(cfg: ExperimentConfig, seed: int, out_root: Path | None = None) -> SeedResult:
    """Full pipeline for one seed; writes its files and returns a summary row."""
    out_root = Path(cfg.output_dir if out_root is None else out_root)
    out = out_root / f"seed_{seed}"
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()

    act = parse(cfg.activation, cfg.hermite_degree).centered()
    series = act.series
    L = series.degree
    t = cfg.teacher
    N, d, n = cfg.sizes.N, cfg.sizes.d, cfg.sizes.n
    teacher = make_teacher(len(t.links), t.links, t.noise_sigma, d, seed, t.raw_gaussian_directions, cfg.hermite_degree)
    data = generate_dataset(teacher, n, seed)
    init = init_network(N, d, seed)
    timings["setup"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    try:
        traj = two_step_train(init, data, act, cfg.step_schedule(), cfg.batch_plan())
    except DegenerateSignError as exc:
        raise DegenerateSignError(f"{exc} at seed {seed}") from exc
    timings["train"] = time.perf_counter() - t1

    t1 = time.perf_counter()
    reports: dict[str, SpectrumReport] = {
        name: svd_spectrum(getattr(traj, name), cfg.margin, keep=KEEP_VECTORS) for name in STEPS
    }
    timings["svd"] = time.perf_counter() - t1

    t1 = time.perf_counter()
    dirs = trajectory_directions(traj, data, L)
    pred = predict_W2(traj, dirs, series, L)
    extra = {"beta_hat_1": dirs.beta_hat_1}
    extra.update({f"beta_hat_2;{k}": dirs.beta_hat_2[k] for k in range(min(L, pred.lam + 2))})
    rows_v = [v for name in ("W1", "W2") for _, v in reports[name].top_vectors]
    names = [f"{name}.v{i + 1}" for name in ("W1", "W2") for i in range(reports[name].right.shape[0])]
    table = alignment_table(rows_v, teacher.directions, extra, names=names)
    raw_dir = {
        name: [alignment(v, b, normalized=False).raw for b in teacher.directions] for name, v in extra.items()
    }
    residuals = {
        "one_step": one_step_residual(traj, dirs, series),
        "gradient2": gradient2_residual(traj, dirs, series, L),
        # truncation order l keeps k < l; the series is asymptotic, so large l can be worse at finite N
        "gradient2_by_order": [gradient2_residual(traj, dirs, series, l) for l in range(1, L + 1)],
        "W2_expansion": pred.residual_op_norm,
        "W2_single_spike": collapsed_residual(traj, dirs, series),
    }
    theory = {}
    phi = cfg.phi
    for q in range(0, min(L, pred.lam + 2)):
        try:
            lim = theory_alignment(0, q, cfg.batch.mode, teacher, phi, cfg.batch.xi2 if cfg.batch.mode == "fresh" else 0.5)
            theory[f"beta_star_1.beta_hat_2;{q}"] = lim.to_dict()
        except UnsupportedLinkError:
            break
    timings["theory"] = time.perf_counter() - t1

    outliers = {s: reports[s].outlier_count for s in STEPS}
    v2 = table.value("W2.v2", 0) if "W2.v2" in table.row_names else float("nan")

    files = {}
    for s in STEPS:
        p = out / f"spectrum_{s}.json"
        _dump(p, {**reports[s].to_dict(), **_provenance(cfg), "seed": seed, "matrix": s})
        files[p.name] = p
        h = out / f"hist_{s}.csv"
        reports[s].histogram_csv(h, HIST_BINS)
        files[h.name] = h
        svg_path = out / f"{s}.svg"
        svg_path.write_text(_render_one(reports[s].histogram(HIST_BINS), reports[s].to_dict(), cfg, seed, s))
        files[svg_path.name] = svg_path
    ap = out / "alignment.csv"
    table.to_csv(ap)
    files[ap.name] = ap

    record = {
        **_provenance(cfg),
        "seed": seed,
        "substreams": list(rng_mod.LABELS),
        "phi": phi,
        "activation_hermite": list(series.coeffs),
        "signs": [traj.sign1, traj.sign2],
        "etas": [traj.eta1, traj.eta2],
        "outlier_counts": outliers,
        "top_singular_values": {s: reports[s].singvals[:5].tolist() for s in STEPS},
        "thresholds": {s: reports[s].threshold for s in STEPS},
        "alignment_cosines": table.to_dict(),
        "learned_direction_raw": raw_dir,
        "W2_v2_cosine": v2,
        "expansion": pred.to_dict(),
        "residuals": residuals,
        "theory_limits": theory,
        "files_sha256": {k: _sha256(v) for k, v in sorted(files.items())},
    }
    _dump(out / "record.json", record)
    timings["total"] = time.perf_counter() - t0
    _dump(out / "timings.json", timings)
    log.info("seed %d: outliers %s, W2.v2 cosine %.3f (%.1fs)", seed, outliers, v2, timings["total"])
    return SeedResult(seed, outliers, v2, str(out / "record.json"))


def _render_one(bins, spec: dict, cfg: ExperimentConfig | None, seed, name) -> str:
    outl = spec["singvals"][: spec["outlier_count"]]
    meta = {"matrix": name, "seed": seed}
    if cfg is not None:
        meta.update(_provenance(cfg))
    elif "config" in spec:
        meta.update({"config": spec["config"], "config_sha256": spec.get("config_sha256")})
    title = f"{name}: {spec['outlier_count']} outlier(s), bulk edge {spec['bulk_edge']:.3f}"
    return histogram_svg(bins, outl, spec["bulk_edge"], title, meta)


def _seed_worker(args):
    cfg, seed, root = args
    return run_seed(cfg, seed, root)


def simulate(cfg: ExperimentConfig, jobs: int | None = None) -> list[SeedResult]:
    """Run ``cfg.seeds_count`` seeds starting at ``cfg.seed``; writes ``summary.csv``."""
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + i for i in range(cfg.seeds_count)]
    jobs = cfg.jobs if jobs is None else jobs
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_seed_worker, [(cfg, s, root) for s in seeds]))
    else:
        results = [run_seed(cfg, s, root) for s in seeds]
    _write_csv(root / "summary.csv", ["seed", "outliers_W0", "outliers_W1", "outliers_W2", "W2_v2_cosine"],
               [r.row() for r in results])
    _dump(root / "summary.json", {**_provenance(cfg), "seeds": [r.__dict__ for r in results]})
    return results


class RenderError(FileNotFoundError):
    pass


def render(run_dir) -> list[Path]:
    """Re-draw ``W{0,1,2}.svg`` in every seed directory from its CSV/JSON files."""
    run_dir = Path(run_dir)
    dirs = sorted(p for p in run_dir.glob("seed_*") if p.is_dir())
    if not dirs and (run_dir / "hist_W0.csv").exists():
        dirs = [run_dir]
    if not dirs:
        raise RenderError(f"no seed directories or spectrum files under {run_dir}")
    missing = [str(d / f) for d in dirs for s in STEPS for f in (f"hist_{s}.csv", f"spectrum_{s}.json")
               if not (d / f).exists()]
    if missing:
        raise RenderError("missing files: " + ", ".join(missing))
    written = []
    for d in dirs:
        for s in STEPS:
            hp = d / f"hist_{s}.csv"
            with open(hp, newline="") as fh:
                rows = list(csv.reader(fh))[1:]
            if not rows:
                raise RenderError(f"empty spectrum file: {hp}")
            bins = [(float(a), float(b), int(c)) for a, b, c in rows]
            spec = json.loads((d / f"spectrum_{s}.json").read_text())
            out = d / f"{s}.svg"
            out.write_text(_render_one(bins, spec, None, spec.get("seed"), s))
            written.append(out)
    return written


# ------------------------------------------------------------ reproductions


def fig4_comparison(reused: list[SeedResult], fresh: list[SeedResult], path: Path) -> list[dict]:
    rows = []
    for r, f in zip(reused, fresh):
        ratio = r.v2_cosine / f.v2_cosine if f.v2_cosine > 0 else float("inf")
        rows.append({"seed": r.seed, "reused": r.v2_cosine, "fresh": f.v2_cosine, "ratio": ratio})
    _write_csv(path, ["seed", "reused_v2_cosine", "fresh_v2_cosine", "ratio"],
               [[x["seed"], repr(x["reused"]), repr(x["fresh"]), repr(x["ratio"])] for x in rows])
    return rows


@dataclass
class SweepPoint:
    d: int
    phi: float
    mean: float
    se: float
    theory: float

    @property
    def z(self) -> float:
        return (self.mean - self.theory) / self.se if self.se > 0 else float("inf")


def alignment_sweep(cfg: ExperimentConfig, progress=None) -> list[SweepPoint]:
    """Empirical ``beta_star^T beta_hat_{2;q}`` (reused batch) against its exact limit, over ``d``.

    Only the data enter; no network is trained. Seeds are ``cfg.seed + i``.
    """
    t = cfg.teacher
    n, q, p = cfg.sizes.n, cfg.sweep.q, cfg.sweep.p
    if not cfg.sweep.d_list:
        raise ValueError("sweep.d_list is empty")
    points = []
    for d in cfg.sweep.d_list:
        vals = []
        for i in range(cfg.seeds_count):
            seed = cfg.seed + i
            teacher = make_teacher(len(t.links), t.links, t.noise_sigma, d, seed, t.raw_gaussian_directions, cfg.hermite_degree)
            vals.append(empirical_alignment(generate_dataset(teacher, n, seed), teacher, q, p))
        phi = d / n
        exact = theory_alignment(p, q, "reused", teacher, phi).value
        se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        points.append(SweepPoint(d, phi, float(np.mean(vals)), se, exact))
        if progress:
            progress(f"d={d} phi={phi:.3f} mean={points[-1].mean:.4g} se={se:.3g} theory={exact:.4g}")
    return points


def write_sweep(points: list[SweepPoint], cfg: ExperimentConfig, root: Path) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    path = root / "alignment_sweep.csv"
    _write_csv(path, ["d", "phi", "empirical_mean", "std_error", "theory", "z_score"],
               [[pt.d, repr(pt.phi), repr(pt.mean), repr(pt.se), repr(pt.theory), repr(pt.z)] for pt in points])
    _dump(root / "alignment_sweep.json", {**_provenance(cfg), "files_sha256": {path.name: _sha256(path)},
                                           "points": [pt.__dict__ for pt in points]})
    return path


def write_lambda_grid(root: Path, L: int = 7, size: int = 50) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    alphas, grid = lambda_grid(L, size)
    path = root / "lambda_grid.csv"
    _write_csv(path, ["alpha1", "alpha2", "lambda"],
               [[repr(float(a1)), repr(float(a2)), int(grid[i, j])]
                for i, a1 in enumerate(alphas) for j, a2 in enumerate(alphas)])
    return path


def scaling_study(cfg: ExperimentConfig, N_list=None, seeds=None, progress=None):
    N_list = list(cfg.scaling.N_list if N_list is None else N_list)
    seeds = cfg.scaling.seeds if seeds is None else seeds
    res = residual_scaling(cfg, N_list, seeds, progress=progress)
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    path = root / "scaling.csv"
    rows = []
    for kind, r in res.items():
        for N, m, s, sl in zip(r.N, r.means, r.stds, r.slopes_so_far()):
            rows.append([kind, N, repr(m), repr(s), repr(sl)])
    _write_csv(path, ["kind", "N", "mean_residual", "std", "slope_so_far"], rows)
    _dump(root / "scaling.json", {**_provenance(cfg), "files_sha256": {path.name: _sha256(path)},
                                   "slopes": {k: r.slope for k, r in res.items()}})
    return res, path
