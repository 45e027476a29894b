"""Detector-2 population of 500 trajectories at balanced phases, plus the fate split at t = 10."""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

from jumpmetrology.cli import main

PRESETS = Path(__file__).resolve().parents[1] / "presets"


def summarize(path: Path, t_final: float = 10.0, threshold: int = 5) -> None:
    final = {}
    with open(path) as fh:
        for row in csv.DictReader(ln for ln in fh if not ln.startswith("#")):
            if abs(float(row["time"]) - t_final) < 1e-9:
                final[row["trajectory"]] = int(row["counts_d1"]) + int(row["counts_d2"])
    split = defaultdict(int)
    for n in final.values():
        split["above" if n > threshold else "below"] += 1
    print(f"{len(final)} trajectories at t={t_final}: {split['above']} above {threshold} counts, "
          f"{split['below']} at or below")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    out = Path(args.out_dir) / "fig3_trajectories.csv"
    extra = ["--workers", str(args.workers)] if args.workers else []
    code = main(["trajectories", "--config", str(PRESETS / "fig3.ini"), "--out", str(out), *extra])
    if code == 0:
        summarize(out)
    raise SystemExit(code)
