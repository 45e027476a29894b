"""Exact Fisher information of detection records by enumerating the event tree.

A record of N steps is one of 4^N event strings. Its probability is the
product of per-step event probabilities along the conditional amplitude
path, and its phi1-derivative follows by forward-mode propagation of
d(alpha)/d(phi1) through the feedback kicks. The tree is walked depth first
so every prefix is computed once; F(n) for every n <= N falls out of a
single walk because each tree level is itself a complete set of records.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numba
import numpy as np

from .dynamics import StateWithDerivative, StepConstants, _advance, _event_probs_grad
from .network import (
    Basis,
    FeedbackConfig,
    ModeAmplitudes,
    NetworkParams,
    build_transforms,
    change_basis,
    transform_derivative,
)
from .trajectory import _resolve_workers, sample_event_strings

DEFAULT_CAP = 14
PROBABILITY_FLOOR = 1e-30
NORMALIZATION_TOL = 1e-10


class BudgetExceededError(ValueError):
    """Requested enumeration depth is above the configured cap."""


class NormalizationError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# kernels


@numba.njit(cache=True, nogil=True)
def _neumaier(acc, i, x):
    s = acc[i]
    t = s + x
    if abs(s) >= abs(x):
        acc[i + 1] += (s - t) + x
    else:
        acc[i + 1] += (x - t) + s
    acc[i] = t


@numba.njit(cache=True, nogil=True)
def _child_derivative(d1, d2, ev, dkicks, dec1, dec2):
    if ev & 2:
        d1 += dkicks[0, 0]
        d2 += dkicks[0, 1]
    if ev & 1:
        d1 += dkicks[1, 0]
        d2 += dkicks[1, 1]
    return d1 * dec1, d2 * dec2


@numba.njit(cache=True, nogil=True)
def _string_prob_grad(events, a1, a2, d1, d2, emit, decay, kicks, dkicks):
    p = np.empty(4)
    dp = np.empty(4)
    P = 1.0
    dP = 0.0
    for ev in events:
        _event_probs_grad(a1, a2, d1, d2, emit[0], emit[1], p, dp)
        dP = dP * p[ev] + P * dp[ev]
        P = P * p[ev]
        d1, d2 = _child_derivative(d1, d2, ev, dkicks, decay[0], decay[1])
        a1, a2 = _advance(a1, a2, ev, kicks, decay[0], decay[1])
    return P, dP, a1, a2, d1, d2


@numba.njit(cache=True, nogil=True)
def _score_batch(strings, a1, a2, d1, d2, emit, decay, kicks, dkicks, out):
    for i in range(strings.shape[0]):
        P, dP, _, _, _, _ = _string_prob_grad(strings[i], a1, a2, d1, d2, emit, decay, kicks, dkicks)
        out[i] = dP / P


@numba.njit(cache=True, nogil=True)
def _dfs(a1, a2, d1, d2, P0, dP0, depth, emit, decay, kicks, dkicks, floor, level_sums, leaf_out):
    """Walk all continuations of length ``depth`` below one state.

    level_sums[L] accumulates (sum P, comp, sum dP^2/P, comp) over nodes
    L+1 steps below the root. If leaf_out is non-empty, the probability of
    each depth-``depth`` leaf is added to leaf_out[index % len(leaf_out)],
    where index is the base-4 string with the first step most significant.
    """
    A1 = np.empty(depth + 1, dtype=np.complex128)
    A2 = np.empty(depth + 1, dtype=np.complex128)
    D1 = np.empty(depth + 1, dtype=np.complex128)
    D2 = np.empty(depth + 1, dtype=np.complex128)
    PP = np.empty(depth + 1)
    DP = np.empty(depth + 1)
    IDX = np.zeros(depth + 1, dtype=np.int64)
    probs = np.empty((depth, 4))
    dprobs = np.empty((depth, 4))
    choice = np.zeros(depth, dtype=np.int64)
    n_out = leaf_out.shape[0]
    A1[0] = a1
    A2[0] = a2
    D1[0] = d1
    D2[0] = d2
    PP[0] = P0
    DP[0] = dP0
    level = 0
    choice[0] = 0
    while level >= 0:
        k = choice[level]
        if k == 4:
            level -= 1
            continue
        if k == 0:
            _event_probs_grad(A1[level], A2[level], D1[level], D2[level], emit[0], emit[1],
                              probs[level], dprobs[level])
        choice[level] = k + 1
        pk = probs[level, k]
        P = PP[level] * pk
        dP = DP[level] * pk + PP[level] * dprobs[level, k]
        _neumaier(level_sums[level], 0, P)
        if P > 0.0 or dP != 0.0:
            _neumaier(level_sums[level], 2, dP * dP / max(P, floor))
        idx = IDX[level] * 4 + k
        if level == depth - 1:
            if n_out > 0:
                leaf_out[idx % n_out] += P
            continue
        nxt = level + 1
        A1[nxt], A2[nxt] = _advance(A1[level], A2[level], k, kicks, decay[0], decay[1])
        D1[nxt], D2[nxt] = _child_derivative(D1[level], D2[level], k, dkicks, decay[0], decay[1])
        PP[nxt] = P
        DP[nxt] = dP
        IDX[nxt] = idx
        choice[nxt] = 0
        level = nxt


# --------------------------------------------------------------------------
# helpers


def start_state(initial: ModeAmplitudes | StateWithDerivative, params: NetworkParams) -> StateWithDerivative:
    """Detector-basis start of a record together with its phi1-derivative.

    Cavity-basis amplitudes are mapped through M_ac, which does not depend on
    phi1, so their derivative is zero.
    """
    if isinstance(initial, StateWithDerivative):
        return initial
    if initial.basis is Basis.DETECTOR:
        return StateWithDerivative(initial)
    return StateWithDerivative(change_basis(initial, build_transforms(params).ac))


def feedback_pulse_start(params: NetworkParams, fb: FeedbackConfig) -> StateWithDerivative:
    """Vacuum kicked once by both pulses: alpha = M_ab (beta1 + beta2), which depends on phi1."""
    kick = fb.beta_d1 + fb.beta_d2
    alpha = change_basis(kick, build_transforms(params).ab)
    dmab = transform_derivative(params, "ab")
    return StateWithDerivative(alpha, dmab.apply(kick.a1, kick.a2))


def _check_budget(n: int, cap: int) -> None:
    if n < 1:
        raise ValueError("number of steps must be >= 1")
    if n > cap:
        raise BudgetExceededError(f"4^{n} strings exceeds the enumeration cap N <= {cap}")


def _consts(params: NetworkParams, fb: FeedbackConfig, dt: float | None) -> StepConstants:
    return StepConstants.build(params, fb, dt)


def string_probability_with_derivative(
    events: Sequence[int],
    initial: ModeAmplitudes | StateWithDerivative,
    params: NetworkParams,
    fb: FeedbackConfig,
    dt: float | None = None,
) -> tuple[float, float]:
    """Probability of an event string and its derivative in phi1."""
    ev = np.asarray(events, dtype=np.int64)
    if ev.size == 0:
        raise ValueError("events must be non-empty")
    if ev.min() < 0 or ev.max() > 3:
        raise ValueError("event codes must lie in 0..3")
    s = start_state(initial, params)
    c = _consts(params, fb, dt)
    P, dP, *_ = _string_prob_grad(ev, s.alpha.a1, s.alpha.a2, *s.dalpha_dphi, c.emit, c.decay, c.kicks, c.dkicks)
    return float(P), float(dP)


def enumerate_strings(
    initial: ModeAmplitudes | StateWithDerivative,
    params: NetworkParams,
    fb: FeedbackConfig,
    n_steps: int,
    dt: float | None = None,
    cap: int = 10,
) -> np.ndarray:
    """Probabilities of all 4^n strings, indexed base 4 with the first step most significant."""
    _check_budget(n_steps, cap)
    return _tail_distribution(initial, params, fb, n_steps, 4**n_steps, dt)


def _tail_distribution(initial, params, fb, n_steps, size, dt) -> np.ndarray:
    s = start_state(initial, params)
    c = _consts(params, fb, dt)
    out = np.zeros(size)
    sums = np.zeros((n_steps, 4))
    _dfs(s.alpha.a1, s.alpha.a2, *s.dalpha_dphi, 1.0, 0.0, n_steps,
         c.emit, c.decay, c.kicks, c.dkicks, PROBABILITY_FLOOR, sums, out)
    return out


# --------------------------------------------------------------------------
# Fisher information


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit F(N) = a N^2 + b N and the bound it implies at time t = N dt."""

    a: float
    b: float
    r_squared: float
    dt: float
    no_information: bool = False

    def fisher_at(self, t: float) -> float:
        n = t / self.dt
        return self.a * n * n + self.b * n

    def bound(self, t: float) -> float:
        """Extrapolated 1/F(t/dt). An estimate only, not a rigorous bound."""
        if self.no_information:
            return math.inf
        f = self.fisher_at(t)
        return 1.0 / f if f > 0 else math.inf


@dataclass(frozen=True)
class FisherResult:
    dt: float
    n_values: tuple[int, ...]
    F: tuple[float, ...]
    phi1: float
    phi2: float
    total_probability: tuple[float, ...] = ()
    fit: ScalingFit | None = None

    @property
    def fit_a(self) -> float | None:
        return None if self.fit is None else self.fit.a

    @property
    def fit_b(self) -> float | None:
        return None if self.fit is None else self.fit.b

    @property
    def r_squared(self) -> float | None:
        return None if self.fit is None else self.fit.r_squared

    def bound(self, t: float) -> float:
        if self.fit is None:
            raise ValueError("no scaling fit attached")
        return self.fit.bound(t)


def fisher_scan(
    initial: ModeAmplitudes | StateWithDerivative,
    params: NetworkParams,
    fb: FeedbackConfig,
    n_max: int,
    dt: float | None = None,
    workers: int | None = 1,
    cap: int = DEFAULT_CAP,
    fit: bool = True,
) -> FisherResult:
    """F(N) for N = 1..n_max from one depth-first walk of the event tree.

    The walk is split into the 16 subtrees below the depth-2 prefixes; partial
    sums are compensated per subtree and combined with ``math.fsum``.
    """
    _check_budget(n_max, cap)
    dt = params.dt if dt is None else dt
    s = start_state(initial, params)
    c = _consts(params, fb, dt)
    a1, a2 = s.alpha.a1, s.alpha.a2
    d1, d2 = s.dalpha_dphi

    # levels reachable from the root within the prefix depth
    split = min(2, n_max)
    head = np.zeros((split, 4))
    _dfs(a1, a2, d1, d2, 1.0, 0.0, split, c.emit, c.decay, c.kicks, c.dkicks,
         PROBABILITY_FLOOR, head, np.zeros(0))
    partial_p = [[head[L, 0], head[L, 1]] for L in range(split)]
    partial_f = [[head[L, 2], head[L, 3]] for L in range(split)]

    rest = n_max - split
    if rest > 0:
        prefixes = [(x1, x2) for x1 in range(4) for x2 in range(4)]

        def job(prefix):
            P, dP, b1, b2, e1, e2 = _string_prob_grad(
                np.array(prefix, dtype=np.int64), a1, a2, d1, d2, c.emit, c.decay, c.kicks, c.dkicks
            )
            sums = np.zeros((rest, 4))
            if P > 0.0 or dP != 0.0:
                _dfs(b1, b2, e1, e2, P, dP, rest, c.emit, c.decay, c.kicks, c.dkicks,
                     PROBABILITY_FLOOR, sums, np.zeros(0))
            return sums

        n_workers = _resolve_workers(workers)
        if n_workers == 1:
            parts = [job(p) for p in prefixes]
        else:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                parts = list(pool.map(job, prefixes))
        for L in range(rest):
            partial_p.append([v for sums in parts for v in sums[L, :2]])
            partial_f.append([v for sums in parts for v in sums[L, 2:]])

    totals = tuple(math.fsum(x) for x in partial_p)
    values = tuple(math.fsum(x) for x in partial_f)
    for n, total in enumerate(totals, start=1):
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NormalizationError(f"string probabilities at N={n} sum to {total!r}")
    n_values = tuple(range(1, n_max + 1))
    result = FisherResult(
        dt=dt, n_values=n_values, F=values, phi1=params.phi1, phi2=params.phi2, total_probability=totals
    )
    if fit and n_max >= 3:
        result = replace(result, fit=fit_and_extrapolate(n_values, values, dt))
    return result


def fisher_information(
    initial: ModeAmplitudes | StateWithDerivative,
    params: NetworkParams,
    fb: FeedbackConfig,
    n_steps: int,
    dt: float | None = None,
    workers: int | None = 1,
    cap: int = DEFAULT_CAP,
) -> float:
    """Fisher information in phi1 of the n_steps-long detection record."""
    return fisher_scan(initial, params, fb, n_steps, dt, workers, cap, fit=False).F[-1]


def fit_and_extrapolate(n_values: Sequence[int], F: Sequence[float], dt: float) -> ScalingFit:
    """Ordinary least squares of F(N) = a N^2 + b N (no intercept)."""
    n = np.asarray(n_values, dtype=float)
    y = np.asarray(F, dtype=float)
    if len(np.unique(n)) < 3:
        raise ValueError("need at least three distinct N values")
    if not np.any(y != 0):
        return ScalingFit(0.0, 0.0, float("nan"), dt, no_information=True)
    X = np.stack([n * n, n], axis=1)
    (a, b), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ np.array([a, b])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(a), float(b), r2, dt)


# --------------------------------------------------------------------------
# correlations and Monte Carlo cross-check


@dataclass(frozen=True)
class MarkovDiagnostics:
    gap: float
    given_last: np.ndarray  # [x_{N-1}, x_N] -> p(x_N | x_{N-1})
    given_last_two: np.ndarray  # [x_{N-2}, x_{N-1}, x_N] -> p(x_N | x_{N-1}, x_{N-2})


def markov_diagnostics(
    initial: ModeAmplitudes | StateWithDerivative,
    params: NetworkParams,
    fb: FeedbackConfig,
    n_steps: int,
    dt: float | None = None,
    cap: int = DEFAULT_CAP,
) -> MarkovDiagnostics:
    """Compare one- and two-step-memory conditionals of the last event."""
    if n_steps < 3:
        raise ValueError("need at least 3 steps")
    _check_budget(n_steps, cap)
    tail = _tail_distribution(initial, params, fb, n_steps, 64, dt).reshape(4, 4, 4)
    pair = tail.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        given_last = pair / pair.sum(axis=1, keepdims=True)
        given_two = tail / tail.sum(axis=2, keepdims=True)
    gap = 0.0
    for x2 in range(4):
        for x1 in range(4):
            if tail[x2, x1].sum() <= 0:
                continue
            gap = max(gap, float(np.max(np.abs(given_two[x2, x1] - given_last[x1]))))
    return MarkovDiagnostics(gap, given_last, given_two)


def markov_gap(initial, params, fb, n_steps, dt=None, cap=DEFAULT_CAP) -> float:
    return markov_diagnostics(initial, params, fb, n_steps, dt, cap).gap


def fisher_monte_carlo(
    initial: ModeAmplitudes | StateWithDerivative,
    params: NetworkParams,
    fb: FeedbackConfig,
    n_steps: int,
    n_traj: int,
    master_seed: int,
    workers: int | None = 1,
) -> tuple[float, float]:
    """Sample mean of the squared score over simulated records, with its standard error.

    Uses the trajectory sampler at ``params.dt``; only cavity-basis starts are
    supported because the sampler starts from M_ac gamma.
    """
    if not isinstance(initial, ModeAmplitudes) or initial.basis is not Basis.CAVITY:
        raise ValueError("Monte Carlo cross-check needs a cavity-basis initial state")
    strings = sample_event_strings(initial, params, fb, n_steps, n_traj, master_seed, workers).astype(np.int64)
    s = start_state(initial, params)
    c = _consts(params, fb, None)
    scores = np.empty(n_traj)
    _score_batch(strings, s.alpha.a1, s.alpha.a2, *s.dalpha_dphi, c.emit, c.decay, c.kicks, c.dkicks, scores)
    sq = scores**2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_traj))
