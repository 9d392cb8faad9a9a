"""Run every bundled desk-scale reproduction into runs/<figure>/.

    python3 scripts/reproduce_desk.py [--jobs 1] [--only fig2 fig4 ...]
"""
import argparse
import sys

from twostep.cli import REPRODUCE, main


def run() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", nargs="+", choices=sorted(REPRODUCE), default=["fig3-grid", "fig5", "fig2", "fig4"])
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for fig in args.only:
        flags = ["--jobs", str(args.jobs)] if fig != "fig3-grid" else []
        code = main(["-v", "reproduce", fig, *flags])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
