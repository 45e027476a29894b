"""Command-line entry point: ``jumpmetrology {trajectories,signal,uncertainty,fisher}``.

Every output carries the fully resolved configuration, so a data file can be
traced back to the run that produced it. CSV files start with ``#`` comment
lines holding the INI document; JSON files embed it under ``"config"``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .estimator import phase_uncertainties, signal_curves
from .fisher import BudgetExceededError, ScalingFit, feedback_pulse_start, fisher_scan
from .trajectory import simulate_records

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4


def _g(x: float) -> str:
    return "%.17g" % x


def _jsonable(x):
    """Replace non-finite floats with None so the JSON stays standard."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _csv_text(cfg: RunConfig, header: list[str], rows) -> str:
    buf = io.StringIO()
    for line in cfgmod.dumps(cfg, runtime=False).splitlines():
        buf.write(f"# {line}\n" if line else "#\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(cfg: RunConfig, payload: dict) -> str:
    doc = {"config": cfgmod.to_sections(cfg, runtime=False), "master_seed": cfg.master_seed, **payload}
    return json.dumps(_jsonable(doc), indent=2, allow_nan=False) + "\n"


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _companion(out: Path | None, suffix: str) -> Path | None:
    return None if out is None else out.with_suffix(suffix)


# --------------------------------------------------------------------------
# subcommands


def cmd_trajectories(cfg: RunConfig, out: Path | None) -> None:
    initial = cfg.initial.cavity_state(cfg.network, cfg.feedback)
    records = simulate_records(
        initial, cfg.network, cfg.feedback, cfg.horizon, cfg.n_traj, cfg.master_seed,
        workers=cfg.workers, sample_every=cfg.sample_every,
    )
    rows = []
    for i, r in enumerate(records):
        for t, c1, c2, p in zip(r.grid, r.counts_d1, r.counts_d2, r.population_d2_series):
            rows.append((i, r.seed, _g(t), int(c1), int(c2), _g(p)))
    header = ["trajectory", "seed", "time", "counts_d1", "counts_d2", "pop_d2"]
    _emit(_csv_text(cfg, header, rows), out)


def cmd_signal(cfg: RunConfig, out: Path | None) -> None:
    if not cfg.phi_grid:
        raise ConfigError("[signal] phi_grid is required for the signal command")
    initial = cfg.initial
    curves = signal_curves(
        cfg.network, cfg.feedback, cfg.phi_grid, cfg.signal_times, cfg.n_traj, cfg.master_seed,
        cfg.threshold, initial, cfg.workers,
    )
    rows = []
    for (obs, t), curve in curves.items():
        for phi, value, se in curve.points:
            rows.append((_g(phi), _g(value), _g(se), _g(t), obs.value, curve.threshold,
                         curve.n_traj, curve.master_seed))
    header = ["phi_tilde", "value", "stderr", "time", "observable", "threshold", "n_traj", "seed"]
    _emit(_csv_text(cfg, header, rows), out)


def _fisher_fit_from_file(cfg: RunConfig, config_dir: Path) -> ScalingFit | None:
    if not cfg.fisher_result:
        return None
    path = Path(cfg.fisher_result)
    if not path.is_absolute():
        path = config_dir / path
    doc = json.loads(path.read_text(encoding="utf-8"))
    fit = doc.get("fit") or {}
    if fit.get("no_information", True):
        return ScalingFit(0.0, 0.0, math.nan, doc["dt"], no_information=True)
    return ScalingFit(fit["a"], fit["b"], fit["r_squared"], doc["dt"])


def cmd_uncertainty(cfg: RunConfig, out: Path | None, config_dir: Path = Path(".")) -> None:
    fit = _fisher_fit_from_file(cfg, config_dir)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        results = phase_uncertainties(
            cfg.network, cfg.feedback, cfg.phi_star, cfg.delta_phi, cfg.uncertainty_times,
            cfg.n_subensembles, cfg.n_traj_per_sub, cfg.master_seed, cfg.threshold,
            cfg.initial, cfg.workers,
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    bounds = [fit.bound(t) for t in cfg.uncertainty_times] if fit is not None else None
    payload = {"results": [r.to_dict() for r in results.values()]}
    if bounds is not None:
        payload["bound"] = {"times": list(cfg.uncertainty_times), "inverse_fisher": bounds}
    _emit(_json_text(cfg, payload), out)

    rows = []
    for obs, r in results.items():
        for i, t in enumerate(r.times):
            rows.append((
                obs.value, _g(t), _g(r.mean_of_O[i]), _g(r.variance_of_O[i]), _g(r.gradient_of_O[i]),
                _g(r.gradient_stderr[i]), _g(r.delta_phi_sq[i]), int(r.zero_gradient[i]),
                _g(bounds[i]) if bounds is not None else "",
            ))
    header = ["observable", "time", "mean", "variance", "gradient", "gradient_stderr",
              "delta_phi_sq", "zero_gradient", "inverse_fisher"]
    if out is not None:
        _emit(_csv_text(cfg, header, rows), _companion(out, ".csv"))


def cmd_fisher(cfg: RunConfig, out: Path | None) -> None:
    p = cfg.network
    if cfg.initial.mode == "feedback_pulse":
        start = feedback_pulse_start(p, cfg.feedback)
    else:
        start = cfg.initial.gamma
    res = fisher_scan(start, p, cfg.feedback, cfg.fisher_n_max, cfg.effective_fisher_dt,
                      workers=cfg.workers, cap=cfg.fisher_cap)
    if res.fit is None:
        fit = {"no_information": True, "reason": "fewer than three N values", "a": None,
               "b": None, "r_squared": None}
    else:
        fit = {"no_information": res.fit.no_information, "a": res.fit.a, "b": res.fit.b,
               "r_squared": res.fit.r_squared}
    times = list(cfg.uncertainty_times)
    bound = [res.fit.bound(t) if res.fit is not None else math.inf for t in times]
    fb = cfg.feedback
    payload = {
        "dt": res.dt,
        "phi1": res.phi1,
        "phi2": res.phi2,
        "feedback": {
            "beta_d1": [cfgmod.format_complex(fb.beta_d1.a1), cfgmod.format_complex(fb.beta_d1.a2)],
            "beta_d2": [cfgmod.format_complex(fb.beta_d2.a1), cfgmod.format_complex(fb.beta_d2.a2)],
        },
        "N": list(res.n_values),
        "F": list(res.F),
        "total_probability": list(res.total_probability),
        "fit": fit,
        "bound_samples": {"times": times, "inverse_fisher": bound},
    }
    _emit(_json_text(cfg, payload), out)
    if out is not None:
        rows = [(n, _g(f)) for n, f in zip(res.n_values, res.F)]
        _emit(_csv_text(cfg, ["N", "F"], rows), _companion(out, ".csv"))


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumpmetrology", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "trajectories": "per-trajectory counts and detector-2 population series (CSV)",
        "signal": "threshold-probability curves over a phase grid (CSV)",
        "uncertainty": "phase uncertainty from subensembles (JSON, plus CSV next to it)",
        "fisher": "exact Fisher information of short records and its N^2 fit (JSON + CSV)",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, help="INI run configuration")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--workers", type=int, help="worker threads (default: all cores)")
        sp.add_argument("--seed", type=int, help="override [run] master_seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load(args.config)
        cfg = cfg.with_overrides(seed=args.seed, workers=args.workers)
        if args.workers is None and cfg.workers == 0:
            cfg = cfg.with_overrides(workers=os.cpu_count() or 1)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    out = Path(args.out) if args.out else None
    try:
        if args.command == "trajectories":
            cmd_trajectories(cfg, out)
        elif args.command == "signal":
            cmd_signal(cfg, out)
        elif args.command == "uncertainty":
            cmd_uncertainty(cfg, out, Path(args.config).resolve().parent)
        else:
            cmd_fisher(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
