"""Print exact and Monte-Carlo alignment limits side by side.

    python3 scripts/theory_table.py [--phi 0.35] [--samples 1000000]
"""
import argparse

from twostep.theory import UnsupportedLinkError, theory_alignment, theory_teacher

TEACHERS = {"H1": ["hermite:1"], "H2": ["hermite:0,1"], "H3": ["hermite:0,0,1"], "tanh": ["tanh"]}


def run() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--phi", type=float, default=0.35)
    ap.add_argument("--xi2", type=float, default=0.5)
    ap.add_argument("--samples", type=int, default=1_000_000)
    args = ap.parse_args()
    print(f"{'teacher':8}{'mode':8}{'q':>3}{'exact':>14}{'mc':>14}{'se':>11}{'z':>8}")
    for name, links in TEACHERS.items():
        t = theory_teacher(links)
        for mode in ("reused", "fresh"):
            for q in range(4):
                mc = theory_alignment(0, q, mode, t, args.phi, args.xi2, "mc", args.samples, seed=q)
                try:
                    ex = theory_alignment(0, q, mode, t, args.phi, args.xi2, "exact").value
                    diff = mc.value - ex
                    # symmetric integrands vanish exactly; MC leaves ~1e-17 of roundoff
                    z = diff / mc.std_error if abs(diff) > 1e-10 else 0.0
                    print(f"{name:8}{mode:8}{q:>3}{ex:>14.6g}{mc.value:>14.6g}{mc.std_error:>11.3g}{z:>8.2f}")
                except UnsupportedLinkError:
                    print(f"{name:8}{mode:8}{q:>3}{'-':>14}{mc.value:>14.6g}{mc.std_error:>11.3g}{'-':>8}")


if __name__ == "__main__":
    run()
