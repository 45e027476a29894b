"""Exact F(N) for N <= n_max, its a N^2 + b N fit and the one- vs two-step memory gap."""

import argparse
import math

from jumpmetrology import FeedbackConfig, NetworkParams, cavity
from jumpmetrology.fisher import fisher_scan, fit_and_extrapolate, markov_gap

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=12)
    ap.add_argument("--phi-tilde", type=float, default=math.pi / 10)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--workers", type=int, default=0)
    args = ap.parse_args()

    params = NetworkParams.reference(args.phi_tilde, dt=args.dt)
    fb = FeedbackConfig.crossed(1.0, 2.0)
    res = fisher_scan(cavity(1, 1), params, fb, args.n_max, workers=args.workers)
    for n, f in zip(res.n_values, res.F):
        print(f"N={n:2d}  F={f:.6e}")
    fit = fit_and_extrapolate(res.n_values[1:], res.F[1:], res.dt)
    print(f"fit over N>=2: a={fit.a:.4e} b={fit.b:.4e} b/a={fit.b / fit.a:.3f} R^2={fit.r_squared:.6f}")
    for t in (1, 2, 5, 10):
        print(f"1/F at t={t}: {fit.bound(t):.4g}")
    coarse = params.with_dt(0.5)
    print(f"memory gap (N=3, dt=0.5): {markov_gap(cavity(1, 1), coarse, fb, 3):.4f} with feedback, "
          f"{markov_gap(cavity(1, 1), coarse, FeedbackConfig.zero(), 3):.1e} without")
