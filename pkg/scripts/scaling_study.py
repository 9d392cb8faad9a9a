"""Residual norms against width and their log-log slopes (configs/scaling.json).

    python3 scripts/scaling_study.py [--N 500 1000 2000 4000] [--seeds 5]
"""
import sys
from pathlib import Path

from twostep.cli import main

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "scaling.json"

if __name__ == "__main__":
    sys.exit(main(["-v", "scaling", str(CONFIG), *sys.argv[1:]]))
