"""Seeded Monte Carlo sampling of photon-counting trajectories.

Each step consumes exactly one uniform variate, compared against the
cumulative (p00, p01, p10, p11). Trajectory ``i`` of an ensemble draws its
variates from ``PCG64(derive_seed(master_seed, i))`` so the ensemble is
bit-identical for any worker count or chunking.
"""

from __future__ import annotations

import enum
import math
import os
import warnings
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np

from .dynamics import (
    JumpApproximationWarning,
    StepConstants,
    _advance,
    _event_probs,
    _pop,
    _sample_event,
    initial_detector_state,
)
from .network import Basis, FeedbackConfig, ModeAmplitudes, NetworkParams, cavity, detector, feedback_pulse_state

DETECTORS = ("d1", "d2", "total")
NO_EVENT = 4  # marks steps after an overflow abort


class TimeNotOnGridError(ValueError):
    pass


class TrajectoryClass(enum.Enum):
    ABOVE_THRESHOLD = "above"
    BELOW_THRESHOLD = "below"


@dataclass(frozen=True)
class InitialState:
    """How a trajectory is started.

    ``"explicit"`` uses the cavity amplitudes ``gamma``; ``"feedback_pulse"``
    starts from vacuum and fires both feedback pulses once, so the start
    depends on the phases.
    """

    mode: str = "explicit"
    gamma: ModeAmplitudes = field(default_factory=lambda: cavity(1, 1))

    def __post_init__(self) -> None:
        if self.mode not in ("explicit", "feedback_pulse"):
            raise ValueError(f"unknown initial-state mode {self.mode!r}")
        if self.gamma.basis is not Basis.CAVITY:
            raise ValueError("gamma must be given in the cavity basis")

    def cavity_state(self, params: NetworkParams, fb: FeedbackConfig) -> ModeAmplitudes:
        if self.mode == "feedback_pulse":
            return feedback_pulse_state(params, fb)
        return self.gamma


def derive_seed(master_seed: int, index: int) -> int:
    """Child seed of trajectory ``index``: SeedSequence(master_seed, spawn_key=(index,)) -> uint64."""
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and indices must be non-negative")
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def step_count(horizon: float, dt: float) -> int:
    """ceil(horizon / dt), ignoring floating-point dust on exact multiples."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    r = horizon / dt
    n = round(r)
    if abs(r - n) <= 1e-9 * max(1.0, r):
        return int(n)
    return int(math.ceil(r))


def sample_steps(n_steps: int, sample_every: int) -> np.ndarray:
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    steps = np.arange(0, n_steps + 1, sample_every, dtype=np.int64)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps


def grid_index(grid: np.ndarray, t: float) -> int:
    idx = int(np.argmin(np.abs(grid - t)))
    if abs(grid[idx] - t) > 1e-9 * max(1.0, abs(t)):
        raise TimeNotOnGridError(f"t={t!r} is not on the sampling grid")
    return idx


@numba.njit(cache=True, nogil=True)
def _simulate_batch(
    a1_0, a2_0, uniforms, emit, decay, kicks, steps, eps_jump, abort_pop,
    counts1, counts2, pop2, events, final, status,
):
    n_traj, n_steps = uniforms.shape
    n_grid = steps.shape[0]
    record = events.shape[1] > 0
    for b in range(n_traj):
        a1 = a1_0
        a2 = a2_0
        c1 = 0
        c2 = 0
        n_unsound = 0
        aborted = 0
        counts1[b, 0] = 0
        counts2[b, 0] = 0
        pop2[b, 0] = _pop(a2)
        g = 1
        k = 0
        while k < n_steps:
            p00, p01, p10, p11 = _event_probs(_pop(a1), _pop(a2), emit[0], emit[1])
            if p01 + p10 + p11 > eps_jump:
                n_unsound += 1
            ev = _sample_event(uniforms[b, k], p00, p01, p10)
            if record:
                events[b, k] = ev
            c1 += ev >> 1
            c2 += ev & 1
            a1, a2 = _advance(a1, a2, ev, kicks, decay[0], decay[1])
            k += 1
            if _pop(a1) > abort_pop or _pop(a2) > abort_pop:
                aborted = 1
            while g < n_grid and steps[g] == k:
                counts1[b, g] = c1
                counts2[b, g] = c2
                pop2[b, g] = np.nan if aborted else _pop(a2)
                g += 1
            if aborted:
                break
        while g < n_grid:
            counts1[b, g] = c1
            counts2[b, g] = c2
            pop2[b, g] = np.nan
            g += 1
        if record:
            for j in range(k, n_steps):
                events[b, j] = 4
        final[b, 0] = a1
        final[b, 1] = a2
        status[b, 0] = aborted
        status[b, 1] = n_unsound


@dataclass
class _Chunk:
    seeds: np.ndarray
    counts1: np.ndarray
    counts2: np.ndarray
    pop2: np.ndarray
    events: np.ndarray
    final: np.ndarray
    status: np.ndarray


def _run_chunk(
    alpha0: ModeAmplitudes,
    consts: StepConstants,
    params: NetworkParams,
    seeds: Sequence[int],
    n_steps: int,
    steps: np.ndarray,
    record_events: bool,
) -> _Chunk:
    n = len(seeds)
    uniforms = np.empty((n, n_steps))
    for i, s in enumerate(seeds):
        uniforms[i] = np.random.Generator(np.random.PCG64(s)).random(n_steps)
    g = len(steps)
    ch = _Chunk(
        seeds=np.asarray(seeds, dtype=np.uint64),
        counts1=np.empty((n, g), dtype=np.int64),
        counts2=np.empty((n, g), dtype=np.int64),
        pop2=np.empty((n, g)),
        events=np.empty((n, n_steps if record_events else 0), dtype=np.uint8),
        final=np.empty((n, 2), dtype=np.complex128),
        status=np.empty((n, 2), dtype=np.int64),
    )
    _simulate_batch(
        alpha0.a1, alpha0.a2, uniforms, consts.emit, consts.decay, consts.kicks, steps,
        params.eps_jump, params.abort_population,
        ch.counts1, ch.counts2, ch.pop2, ch.events, ch.final, ch.status,
    )
    return ch


def _resolve_workers(workers: int | None) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return workers


def _run_many(
    initial: ModeAmplitudes,
    params: NetworkParams,
    fb: FeedbackConfig,
    n_steps: int,
    seeds: Sequence[int],
    steps: np.ndarray,
    record_events: bool,
    workers: int | None,
    chunk_size: int,
) -> list[_Chunk]:
    alpha0 = initial_detector_state(initial, params)
    consts = StepConstants.build(params, fb)
    # bound the uniforms buffer per chunk to ~16 MB
    chunk_size = max(1, min(chunk_size, 2_000_000 // max(n_steps, 1)))
    parts = [seeds[i : i + chunk_size] for i in range(0, len(seeds), chunk_size)]
    workers = _resolve_workers(workers)

    def job(part):
        return _run_chunk(alpha0, consts, params, part, n_steps, steps, record_events)

    if workers == 1 or len(parts) == 1:
        chunks = [job(p) for p in parts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, parts))
    n_unsound = sum(int(c.status[:, 1].sum()) for c in chunks)
    if n_unsound:
        warnings.warn(
            f"{n_unsound} steps had click probability above eps_jump={params.eps_jump}",
            JumpApproximationWarning,
            stacklevel=3,
        )
    return chunks


@dataclass
class TrajectoryRecord:
    seed: int
    grid: np.ndarray
    counts_d1: np.ndarray
    counts_d2: np.ndarray
    final_alpha: ModeAmplitudes
    population_d2_series: np.ndarray | None = None
    aborted: bool = False
    events: np.ndarray | None = None
    n_unsound_steps: int = 0

    def counts(self, signal: str = "total") -> np.ndarray:
        if signal == "d1":
            return self.counts_d1
        if signal == "d2":
            return self.counts_d2
        if signal == "total":
            return self.counts_d1 + self.counts_d2
        raise ValueError(f"unknown signal {signal!r}; expected one of {DETECTORS}")


def _records(chunks: Iterable[_Chunk], grid: np.ndarray, keep_pop: bool) -> list[TrajectoryRecord]:
    out = []
    for ch in chunks:
        for i in range(len(ch.seeds)):
            out.append(
                TrajectoryRecord(
                    seed=int(ch.seeds[i]),
                    grid=grid,
                    counts_d1=ch.counts1[i].copy(),
                    counts_d2=ch.counts2[i].copy(),
                    final_alpha=detector(complex(ch.final[i, 0]), complex(ch.final[i, 1])),
                    population_d2_series=ch.pop2[i].copy() if keep_pop else None,
                    aborted=bool(ch.status[i, 0]),
                    events=ch.events[i].copy() if ch.events.shape[1] else None,
                    n_unsound_steps=int(ch.status[i, 1]),
                )
            )
    return out


def simulate_trajectory(
    initial: ModeAmplitudes,
    params: NetworkParams,
    fb: FeedbackConfig,
    horizon: float,
    seed: int,
    sample_every: int = 100,
    record_events: bool = False,
) -> TrajectoryRecord:
    """Sample one trajectory from cavity-basis initial amplitudes."""
    n_steps = step_count(horizon, params.dt)
    steps = sample_steps(n_steps, sample_every)
    chunks = _run_many(initial, params, fb, n_steps, [seed], steps, record_events, 1, 1)
    return _records(chunks, steps * params.dt, keep_pop=True)[0]


def simulate_records(
    initial: ModeAmplitudes,
    params: NetworkParams,
    fb: FeedbackConfig,
    horizon: float,
    n_traj: int,
    master_seed: int,
    workers: int | None = 1,
    sample_every: int = 100,
    record_events: bool = False,
) -> list[TrajectoryRecord]:
    """Full per-trajectory records for trajectories 0..n_traj-1 of ``master_seed``."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    n_steps = step_count(horizon, params.dt)
    steps = sample_steps(n_steps, sample_every)
    seeds = [derive_seed(master_seed, i) for i in range(n_traj)]
    chunks = _run_many(initial, params, fb, n_steps, seeds, steps, record_events, workers, 256)
    return _records(chunks, steps * params.dt, keep_pop=True)


def sample_event_strings(
    initial: ModeAmplitudes,
    params: NetworkParams,
    fb: FeedbackConfig,
    n_steps: int,
    n_traj: int,
    master_seed: int,
    workers: int | None = 1,
) -> np.ndarray:
    """Event codes (0..3, see DetectionEvent) of shape (n_traj, n_steps)."""
    seeds = [derive_seed(master_seed, i) for i in range(n_traj)]
    steps = sample_steps(n_steps, n_steps)
    chunks = _run_many(initial, params, fb, n_steps, seeds, steps, True, workers, 4096)
    return np.concatenate([c.events for c in chunks])


@dataclass
class EnsembleStats:
    """Count histograms and threshold tallies of an ensemble on a time grid.

    ``histograms[g]`` maps (counts_d1, counts_d2) to the number of
    trajectories with those counts at ``grid[g]``; ``tallies[(det, N)][g]``
    is the number of trajectories whose count on ``det`` exceeds N.
    """

    n_traj: int
    grid: np.ndarray
    histograms: list[Counter]
    tallies: dict[tuple[str, int], np.ndarray]
    thresholds: tuple[int, ...]
    n_aborted: int = 0
    n_unsound_steps: int = 0
    master_seed: int | None = None

    @property
    def abort_fraction(self) -> float:
        return self.n_aborted / self.n_traj

    def index_of(self, t: float) -> int:
        return grid_index(self.grid, t)

    def merge(self, other: EnsembleStats) -> EnsembleStats:
        if not np.array_equal(self.grid, other.grid) or self.thresholds != other.thresholds:
            raise ValueError("can only merge ensembles on the same grid and thresholds")
        return EnsembleStats(
            n_traj=self.n_traj + other.n_traj,
            grid=self.grid,
            histograms=[a + b for a, b in zip(self.histograms, other.histograms)],
            tallies={k: self.tallies[k] + other.tallies[k] for k in self.tallies},
            thresholds=self.thresholds,
            n_aborted=self.n_aborted + other.n_aborted,
            n_unsound_steps=self.n_unsound_steps + other.n_unsound_steps,
            master_seed=self.master_seed if self.master_seed == other.master_seed else None,
        )

    def exceed_count(self, detector: str, threshold: int, t: float) -> int:
        g = self.index_of(t)
        key = (detector, threshold)
        if key in self.tallies:
            return int(self.tallies[key][g])
        return sum(n for pair, n in self.histograms[g].items() if _signal(pair, detector) > threshold)

    def indicator_difference(self, threshold: int, t: float) -> tuple[float, float]:
        """Mean and population variance of 1[n1 > N] - 1[n2 > N] at time t."""
        g = self.index_of(t)
        s1 = s2 = 0
        for (c1, c2), n in self.histograms[g].items():
            d = int(c1 > threshold) - int(c2 > threshold)
            s1 += d * n
            s2 += d * d * n
        mean = s1 / self.n_traj
        return mean, max(s2 / self.n_traj - mean * mean, 0.0)

    def count_moments(self, t: float, detector: str = "total") -> tuple[float, float]:
        """Mean and population variance of the photon count at time t."""
        g = self.index_of(t)
        s1 = s2 = 0
        for pair, n in self.histograms[g].items():
            c = _signal(pair, detector)
            s1 += c * n
            s2 += c * c * n
        mean = s1 / self.n_traj
        return mean, s2 / self.n_traj - mean * mean


def _signal(pair: tuple[int, int], detector: str) -> int:
    if detector == "d1":
        return pair[0]
    if detector == "d2":
        return pair[1]
    if detector == "total":
        return pair[0] + pair[1]
    raise ValueError(f"unknown detector {detector!r}; expected one of {DETECTORS}")


def _chunk_stats(ch: _Chunk, grid: np.ndarray, thresholds: tuple[int, ...]) -> EnsembleStats:
    hists = []
    for g in range(len(grid)):
        pairs, n = np.unique(np.stack([ch.counts1[:, g], ch.counts2[:, g]], axis=1), axis=0, return_counts=True)
        hists.append(Counter({(int(a), int(b)): int(k) for (a, b), k in zip(pairs, n)}))
    tallies = {}
    for th in thresholds:
        tallies[("d1", th)] = (ch.counts1 > th).sum(axis=0)
        tallies[("d2", th)] = (ch.counts2 > th).sum(axis=0)
        tallies[("total", th)] = (ch.counts1 + ch.counts2 > th).sum(axis=0)
    return EnsembleStats(
        n_traj=len(ch.seeds),
        grid=grid,
        histograms=hists,
        tallies=tallies,
        thresholds=thresholds,
        n_aborted=int(ch.status[:, 0].sum()),
        n_unsound_steps=int(ch.status[:, 1].sum()),
    )


def simulate_ensemble(
    initial: ModeAmplitudes,
    params: NetworkParams,
    fb: FeedbackConfig,
    horizon: float,
    n_traj: int,
    master_seed: int,
    workers: int | None = 1,
    sample_every: int = 100,
    thresholds: Iterable[int] = (5,),
    chunk_size: int = 256,
) -> EnsembleStats:
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    thresholds = tuple(sorted(set(int(t) for t in thresholds)))
    n_steps = step_count(horizon, params.dt)
    steps = sample_steps(n_steps, sample_every)
    grid = steps * params.dt
    seeds = [derive_seed(master_seed, i) for i in range(n_traj)]
    chunks = _run_many(initial, params, fb, n_steps, seeds, steps, False, workers, chunk_size)
    stats = _chunk_stats(chunks[0], grid, thresholds)
    for ch in chunks[1:]:
        stats = stats.merge(_chunk_stats(ch, grid, thresholds))
    stats.master_seed = master_seed
    return stats


def classify_trajectory(
    record: TrajectoryRecord, threshold: int, t: float, signal: str = "total"
) -> TrajectoryClass:
    g = grid_index(record.grid, t)
    if record.counts(signal)[g] > threshold:
        return TrajectoryClass.ABOVE_THRESHOLD
    return TrajectoryClass.BELOW_THRESHOLD
