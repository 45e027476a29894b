"""Threshold-probability curves over phi_tilde at t = 0.5, 1 and 10 (10^4 trajectories per point)."""

import argparse
from pathlib import Path

from jumpmetrology.cli import main

PRESETS = Path(__file__).resolve().parents[1] / "presets"

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    extra = ["--workers", str(args.workers)] if args.workers else []
    out = Path(args.out_dir) / "fig4_signals.csv"
    raise SystemExit(main(["signal", "--config", str(PRESETS / "fig4.ini"), "--out", str(out), *extra]))
