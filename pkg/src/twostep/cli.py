"""Command-line entry point: ``twostep <subcommand>``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or validation error.
Configuration precedence: flags, then ``TWOSTEP_SEED`` / ``TWOSTEP_OUTPUT_DIR``,
then the config file, then built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .activation import SpecError
from .config import ConfigError, load_config, parse_set_args
from .hermite import MomentOverflowError
from .theory import DomainError, ScalingFitError, UnsupportedLinkError, theory_alignment, theory_teacher
from .trainer import DegenerateSignError

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"
REPRODUCE = {
    "fig2": ["fig2_desk.json"],
    "fig4": ["fig4_reused_desk.json", "fig4_fresh_desk.json"],
    "fig5": ["fig5_sweep.json"],
    "fig3-grid": [],
}

log = logging.getLogger("twostep")


def _flags(args) -> dict:
    flags = parse_set_args(getattr(args, "set", None) or [])
    for attr, key in (("seed", "seed"), ("output_dir", "output_dir"), ("seeds_count", "seeds_count"), ("jobs", "jobs")):
        v = getattr(args, attr, None)
        if v is not None:
            flags[key] = v
    return flags


def _load(path, args):
    return load_config(path, _flags(args))


def cmd_simulate(args) -> int:
    from .experiment import simulate

    cfg = _load(args.config, args)
    if args.dry_run:
        print(json.dumps({"valid": True, "config_sha256": cfg.checksum(), "config": cfg.to_dict()}, indent=2))
        return EXIT_OK
    results = simulate(cfg)
    for r in results:
        print(f"seed {r.seed}: outliers W0={r.outliers['W0']} W1={r.outliers['W1']} W2={r.outliers['W2']}"
              f" W2.v2 cosine={r.v2_cosine:.4f}")
    print(f"wrote {cfg.output_dir}")
    return EXIT_OK


def cmd_theory(args) -> int:
    teacher = theory_teacher(args.teacher or ["hermite:0,0,1"], args.noise)
    lim = theory_alignment(args.p, args.q, args.mode, teacher, args.phi, args.xi2, args.method, args.mc_samples, args.seed)
    print(json.dumps(lim.to_dict(), indent=2))
    return EXIT_OK


def cmd_scaling(args) -> int:
    from .experiment import scaling_study

    cfg = _load(args.config, args)
    N_list = args.N if args.N else None
    if N_list is not None and len(set(N_list)) < 3:
        raise ConfigError([f"--N: need at least 3 distinct widths to fit a slope, got {N_list}"])
    res, path = scaling_study(cfg, N_list, args.seeds, progress=lambda m: log.info(m))
    for k, r in res.items():
        print(f"{k}: slope {r.slope:.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_render(args) -> int:
    from .experiment import render

    for p in render(args.run_dir):
        print(p)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .experiment import alignment_sweep, fig4_comparison, simulate, write_lambda_grid, write_sweep

    root = Path(args.output_dir or f"runs/{args.figure}")
    cfg_dir = Path(args.config_dir) if args.config_dir else CONFIG_DIR
    t0 = time.perf_counter()
    if args.figure == "fig3-grid":
        print(f"wrote {write_lambda_grid(root)}")
        return EXIT_OK
    cfgs = [load_config(cfg_dir / name, {**_flags(args), "output_dir": str(root / Path(name).stem)})
            for name in REPRODUCE[args.figure]]
    if args.figure == "fig2":
        simulate(cfgs[0])
    elif args.figure == "fig4":
        rows = fig4_comparison(simulate(cfgs[0]), simulate(cfgs[1]), root / "fig4_comparison.csv")
        for r in rows:
            print(f"seed {r['seed']}: reused {r['reused']:.4f} fresh {r['fresh']:.4f}")
    elif args.figure == "fig5":
        pts = alignment_sweep(cfgs[0], progress=lambda m: log.info(m))
        write_sweep(pts, cfgs[0], root)
        for pt in pts:
            print(f"d={pt.d} phi={pt.phi:.3f} empirical={pt.mean:.4f}+-{pt.se:.4f} theory={pt.theory:.4f} z={pt.z:+.2f}")
    print(f"wrote {root} ({time.perf_counter() - t0:.1f}s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twostep", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seeds-count", dest="seeds_count", type=int)
        p.add_argument("--jobs", type=int, help="worker processes, one seed each")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field, e.g. schedule.alpha1=0.2")

    p = sub.add_parser("simulate", help="run the two-step pipeline for every configured seed")
    p.add_argument("config")
    p.add_argument("--dry-run", action="store_true", help="validate and echo the resolved config only")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("theory", help="limit of beta_star_p^T beta_hat_{2;q}")
    p.add_argument("--mode", choices=["reused", "fresh"], default="reused")
    p.add_argument("--p", type=int, default=0, help="0-based teacher direction index")
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--teacher", action="append", help="link spec, repeat for M > 1 (default hermite:0,0,1)")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--phi", type=float, default=0.35)
    p.add_argument("--xi2", type=float, default=0.5)
    p.add_argument("--method", choices=["exact", "mc"], default="exact")
    p.add_argument("--mc-samples", dest="mc_samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("scaling", help="residual norms against N and their log-log slopes")
    p.add_argument("config")
    p.add_argument("--N", type=int, nargs="+", help="widths (default: scaling.N_list)")
    p.add_argument("--seeds", type=int, help="seeds per width (default: scaling.seeds)")
    common(p)
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("render", help="re-draw SVG histograms from a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("reproduce", help="run a bundled figure reproduction")
    p.add_argument("figure", choices=sorted(REPRODUCE))
    p.add_argument("--config-dir", dest="config_dir")
    common(p)
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpecError, DomainError, UnsupportedLinkError, MomentOverflowError, ValueError, IndexError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateSignError as exc:
        seed = getattr(args, "seed", None)
        print(f"runtime error: {exc} (seed {seed}); re-run with another --seed", file=sys.stderr)
        return EXIT_RUNTIME
    except (ScalingFitError, OSError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
