"""Threshold-probability signals and phase uncertainty by error propagation.

The measured signal is the probability that a detector has registered more
than ``threshold`` photons by time t. Curves over the phase difference use
common random numbers: every phase point reuses the same master seed, so
differences between neighbouring points are not swamped by sampling noise.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .network import FeedbackConfig, NetworkParams
from .trajectory import EnsembleStats, InitialState, derive_seed, simulate_ensemble, step_count

DEFAULT_THRESHOLD = 5
DEFAULT_PHI_STAR = math.pi / 10
DEFAULT_DELTA_PHI = 0.05


class Observable(str, enum.Enum):
    P_D1 = "P_d1"
    P_D2 = "P_d2"
    DIFFERENCE = "P_d1_minus_P_d2"


class ZeroGradientError(ArithmeticError):
    """Signal gradient is indistinguishable from zero; the uncertainty is unbounded."""


def threshold_signal(stats: EnsembleStats, detector: str, threshold: int, t: float) -> tuple[float, float]:
    """Fraction of trajectories above threshold at t, with its binomial standard error."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    p = stats.exceed_count(detector, threshold, t) / stats.n_traj
    return p, math.sqrt(p * (1.0 - p) / stats.n_traj)


def observable_value(stats: EnsembleStats, observable: Observable, threshold: int, t: float) -> tuple[float, float]:
    observable = Observable(observable)
    if observable is Observable.P_D1:
        return threshold_signal(stats, "d1", threshold, t)
    if observable is Observable.P_D2:
        return threshold_signal(stats, "d2", threshold, t)
    # value as a plain subtraction so it equals the two single-detector curves exactly
    p1, _ = threshold_signal(stats, "d1", threshold, t)
    p2, _ = threshold_signal(stats, "d2", threshold, t)
    _, var = stats.indicator_difference(threshold, t)
    return p1 - p2, math.sqrt(var / stats.n_traj)


@dataclass
class SignalCurve:
    observable: Observable
    threshold: int
    time: float
    points: list[tuple[float, float, float]]  # (phi_tilde, value, stderr)
    n_traj: int
    master_seed: int

    @property
    def phis(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])


def _sample_every(times: Iterable[float], dt: float, default: int = 100) -> int:
    return math.gcd(default, *(step_count(t, dt) for t in times))


def _ensemble(params, fb, initial, horizon, n_traj, seed, workers, sample_every, threshold):
    return simulate_ensemble(
        initial.cavity_state(params, fb), params, fb, horizon, n_traj, seed,
        workers=workers, sample_every=sample_every, thresholds=(threshold,),
    )


def signal_curves(
    params_template: NetworkParams,
    fb: FeedbackConfig,
    phi_grid: Sequence[float],
    times: Sequence[float],
    n_traj: int,
    master_seed: int,
    threshold: int = DEFAULT_THRESHOLD,
    initial: InitialState | None = None,
    workers: int | None = 1,
    observables: Sequence[Observable] = tuple(Observable),
) -> dict[tuple[Observable, float], SignalCurve]:
    """All requested (observable, time) curves from one ensemble per phase point.

    Each phase point holds the template phi2, sets phi1 = phi2 + phi_tilde and
    reuses ``master_seed``.
    """
    if len(phi_grid) == 0:
        raise ValueError("phi_grid must be non-empty")
    if len(times) == 0:
        raise ValueError("need at least one time")
    initial = initial or InitialState()
    every = _sample_every(times, params_template.dt)
    horizon = max(times)
    curves = {
        (Observable(o), t): SignalCurve(Observable(o), threshold, t, [], n_traj, master_seed)
        for o in observables
        for t in times
    }
    for phi in phi_grid:
        stats = _ensemble(params_template.with_phase(phi), fb, initial, horizon, n_traj,
                          master_seed, workers, every, threshold)
        for (o, t), curve in curves.items():
            value, se = observable_value(stats, o, threshold, t)
            curve.points.append((float(phi), value, se))
    return curves


def signal_curve(
    params_template: NetworkParams,
    fb: FeedbackConfig,
    phi_grid: Sequence[float],
    t: float,
    n_traj: int,
    master_seed: int,
    observable: Observable,
    threshold: int = DEFAULT_THRESHOLD,
    initial: InitialState | None = None,
    workers: int | None = 1,
) -> SignalCurve:
    curves = signal_curves(params_template, fb, phi_grid, [t], n_traj, master_seed, threshold,
                           initial, workers, [observable])
    return curves[(Observable(observable), t)]


@dataclass
class UncertaintyResult:
    observable: Observable
    phi_star: float
    delta_phi: float
    times: list[float]
    mean_of_O: list[float]
    variance_of_O: list[float]
    gradient_of_O: list[float]
    gradient_stderr: list[float]
    delta_phi_sq: list[float]
    zero_gradient: list[bool]
    n_subensembles: int
    n_traj_per_subensemble: int
    threshold: int
    master_seed: int

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["observable"] = self.observable.value
        d["delta_phi_sq"] = [None if math.isinf(v) else v for v in self.delta_phi_sq]
        return d


def phase_uncertainties(
    params_template: NetworkParams,
    fb: FeedbackConfig,
    phi_star: float = DEFAULT_PHI_STAR,
    delta_phi: float = DEFAULT_DELTA_PHI,
    times: Sequence[float] = (10.0,),
    n_subensembles: int = 10,
    n_traj_per_sub: int = 1000,
    master_seed: int = 0,
    threshold: int = DEFAULT_THRESHOLD,
    initial: InitialState | None = None,
    workers: int | None = 1,
    observables: Sequence[Observable] = tuple(Observable),
    strict: bool = False,
) -> dict[Observable, UncertaintyResult]:
    """(Delta phi)^2 = Var(O) / (d<O>/dphi)^2 for each observable and time.

    Var(O) is the sample variance over independent subensembles at
    ``phi_star``. The gradient is a central difference of the
    subensemble-averaged observable at phi_star +- delta_phi, with each
    subensemble reusing its seed at all three phases. A gradient no larger
    than its own standard error is flagged and gives an infinite (Delta phi)^2;
    with ``strict`` such a point raises :class:`ZeroGradientError`.
    """
    if delta_phi <= 0:
        raise ValueError("delta_phi must be positive")
    if n_subensembles < 2:
        raise ValueError("need at least two subensembles")
    initial = initial or InitialState()
    times = [float(t) for t in times]
    every = _sample_every(times, params_template.dt)
    horizon = max(times)
    observables = [Observable(o) for o in observables]
    K = n_subensembles

    # values[o][phase][k, time]
    values = {o: np.empty((3, K, len(times))) for o in observables}
    for k in range(K):
        seed = derive_seed(master_seed, k)
        for j, phi in enumerate((phi_star, phi_star + delta_phi, phi_star - delta_phi)):
            stats = _ensemble(params_template.with_phase(phi), fb, initial, horizon,
                              n_traj_per_sub, seed, workers, every, threshold)
            for o in observables:
                for i, t in enumerate(times):
                    values[o][j, k, i] = observable_value(stats, o, threshold, t)[0]

    results = {}
    for o in observables:
        centre, plus, minus = values[o]
        var = centre.var(axis=0, ddof=1)
        per_sub_grad = (plus - minus) / (2.0 * delta_phi)
        grad = per_sub_grad.mean(axis=0)
        grad_se = per_sub_grad.std(axis=0, ddof=1) / math.sqrt(K)
        flags = [bool(abs(g) <= se) for g, se in zip(grad, grad_se)]
        dphi2 = [math.inf if f else float(v / (g * g)) for v, g, f in zip(var, grad, flags)]
        if any(flags):
            msg = (f"{o.value}: gradient indistinguishable from zero at t="
                   f"{[t for t, f in zip(times, flags) if f]}")
            if strict:
                raise ZeroGradientError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        results[o] = UncertaintyResult(
            observable=o,
            phi_star=phi_star,
            delta_phi=delta_phi,
            times=times,
            mean_of_O=[float(x) for x in centre.mean(axis=0)],
            variance_of_O=[float(x) for x in var],
            gradient_of_O=[float(x) for x in grad],
            gradient_stderr=[float(x) for x in grad_se],
            delta_phi_sq=dphi2,
            zero_gradient=flags,
            n_subensembles=K,
            n_traj_per_subensemble=n_traj_per_sub,
            threshold=threshold,
            master_seed=master_seed,
        )
    return results


def phase_uncertainty(
    params_template: NetworkParams,
    fb: FeedbackConfig,
    phi_star: float,
    delta_phi: float,
    times: Sequence[float],
    n_subensembles: int,
    n_traj_per_sub: int,
    master_seed: int,
    observable: Observable,
    threshold: int = DEFAULT_THRESHOLD,
    initial: InitialState | None = None,
    workers: int | None = 1,
    strict: bool = True,
) -> UncertaintyResult:
    res = phase_uncertainties(params_template, fb, phi_star, delta_phi, times, n_subensembles,
                              n_traj_per_sub, master_seed, threshold, initial, workers,
                              [observable], strict)
    return res[Observable(observable)]
