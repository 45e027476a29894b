"""Phase uncertainty against time at phi_tilde = pi/10, with the extrapolated 1/F curve.

Runs the Fisher preset first (its JSON feeds the bound column), then the
uncertainty preset. Both land in results/ next to the presets directory,
which is where presets/fig5.ini looks for the Fisher output.
"""

import argparse
import json
from pathlib import Path

from jumpmetrology.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    extra = ["--workers", str(args.workers)] if args.workers else []
    results = ROOT / "results"
    code = main(["fisher", "--config", str(ROOT / "presets" / "fisher.ini"),
                 "--out", str(results / "fisher.json"), *extra])
    if code:
        raise SystemExit(code)
    out = results / "fig5_uncertainty.json"
    code = main(["uncertainty", "--config", str(ROOT / "presets" / "fig5.ini"), "--out", str(out), *extra])
    if code == 0:
        doc = json.loads(out.read_text())
        times = doc["bound"]["times"]
        print("time    " + "  ".join(f"{t:>8g}" for t in times))
        for r in doc["results"]:
            vals = ["     inf" if v is None else f"{v:8.4f}" for v in r["delta_phi_sq"]]
            print(f"{r['observable']:<16}" + "  ".join(vals))
        print(f"{'1/F':<16}" + "  ".join(f"{b:8.4f}" for b in doc["bound"]["inverse_fisher"]))
    raise SystemExit(code)
