import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpmetrology.estimator import (
    Observable,
    ZeroGradientError,
    observable_value,
    phase_uncertainties,
    phase_uncertainty,
    signal_curve,
    signal_curves,
    threshold_signal,
)
from jumpmetrology.network import FeedbackConfig, NetworkParams, cavity
from jumpmetrology.trajectory import EnsembleStats, InitialState, simulate_ensemble

REF = NetworkParams.reference()
COARSE = NetworkParams.reference(dt=0.01)


def synthetic_stats(pairs):
    """One-time-point ensemble from explicit (counts_d1, counts_d2) pairs."""
    h = Counter(pairs)
    return EnsembleStats(n_traj=len(pairs), grid=np.array([0.0, 1.0]),
                         histograms=[Counter({(0, 0): len(pairs)}), h], tallies={}, thresholds=())


def test_all_zero_counts():
    stats = synthetic_stats([(0, 0)] * 50)
    assert threshold_signal(stats, "d1", 5, 1.0) == (0.0, 0.0)
    assert observable_value(stats, Observable.DIFFERENCE, 5, 1.0) == (0.0, 0.0)


def test_threshold_zero_all_clicked():
    stats = synthetic_stats([(1, 0), (3, 2), (1, 1)])
    assert threshold_signal(stats, "d1", 0, 1.0) == (1.0, 0.0)


def test_difference_standard_error_uses_joint_law():
    pairs = [(6, 6)] * 30 + [(6, 0)] * 10 + [(0, 0)] * 60
    stats = synthetic_stats(pairs)
    mean, se = observable_value(stats, Observable.DIFFERENCE, 5, 1.0)
    d = np.array([int(a > 5) - int(b > 5) for a, b in pairs])
    assert mean == pytest.approx(d.mean())
    assert se == pytest.approx(d.std() / math.sqrt(len(d)))


@given(st.floats(0.05, 0.95), st.integers(1, 6))
def test_standard_error_shrinks_as_inverse_root_n(p, k):
    n = 100 * k
    m = round(p * n)
    small = synthetic_stats([(9, 0)] * m + [(0, 0)] * (n - m))
    big = synthetic_stats([(9, 0)] * (4 * m) + [(0, 0)] * (4 * (n - m)))
    _, se_small = threshold_signal(small, "d1", 5, 1.0)
    _, se_big = threshold_signal(big, "d1", 5, 1.0)
    assert se_big == pytest.approx(se_small / 2, rel=1e-12)


def test_negative_threshold():
    with pytest.raises(ValueError):
        threshold_signal(synthetic_stats([(0, 0)]), "d1", -1, 1.0)


# ---------------------------------------------------------------- curves


@pytest.fixture(scope="module")
def curves():
    grid = [-math.pi, -1.0, 0.0, 0.5, math.pi]
    return grid, signal_curves(COARSE, FeedbackConfig.crossed(), grid, [0.5, 2.0], 400, 77)


def test_curves_in_range(curves):
    _, cs = curves
    for (obs, _), c in cs.items():
        lo = -1 if obs is Observable.DIFFERENCE else 0
        assert np.all((c.values >= lo) & (c.values <= 1)) and np.all(c.stderrs >= 0)


def test_difference_identity_exact(curves):
    _, cs = curves
    for t in (0.5, 2.0):
        d = cs[(Observable.DIFFERENCE, t)].values
        assert np.array_equal(d, cs[(Observable.P_D1, t)].values - cs[(Observable.P_D2, t)].values)


def test_two_pi_periodicity(curves):
    _, cs = curves
    for c in cs.values():
        assert c.values[0] == c.values[-1]
    a = signal_curve(COARSE, FeedbackConfig.crossed(), [0.3], 2.0, 300, 5, Observable.P_D2)
    b = signal_curve(COARSE, FeedbackConfig.crossed(), [0.3 + 2 * math.pi], 2.0, 300, 5, Observable.P_D2)
    assert a.values[0] == b.values[0]


def test_single_point_grid():
    c = signal_curve(COARSE, FeedbackConfig.crossed(), [0.1], 1.0, 50, 3, Observable.P_D1)
    assert len(c.points) == 1 and c.points[0][0] == 0.1


def test_signal_matches_direct_ensemble():
    c = signal_curve(COARSE, FeedbackConfig.crossed(), [0.4], 1.0, 200, 9, Observable.P_D1)
    stats = simulate_ensemble(cavity(1, 1), COARSE.with_phase(0.4), FeedbackConfig.crossed(), 1.0, 200, 9,
                              sample_every=100)
    assert c.values[0] == stats.exceed_count("d1", 5, 1.0) / 200


def test_curve_validation():
    with pytest.raises(ValueError):
        signal_curves(COARSE, FeedbackConfig.crossed(), [], [1.0], 10, 0)


# ---------------------------------------------------------------- uncertainty


def test_zero_feedback_gradient_is_flagged():
    kw = dict(phi_star=0.3, delta_phi=0.05, times=(0.5, 1.0), n_subensembles=4, n_traj_per_sub=100,
              master_seed=1)
    res = phase_uncertainties(COARSE, FeedbackConfig.zero(), **kw)
    for r in res.values():
        assert all(r.zero_gradient) and all(math.isinf(v) for v in r.delta_phi_sq)
        assert all(v >= 0 for v in r.variance_of_O)
    with pytest.raises(ZeroGradientError):
        phase_uncertainty(COARSE, FeedbackConfig.zero(), observable=Observable.P_D1, **kw)


def test_delta_phi_sq_definition():
    res = phase_uncertainties(COARSE, FeedbackConfig.crossed(), math.pi / 10, 0.05, (1.0, 2.0), 5, 300, 4)
    for r in res.values():
        for v, g, dp, flag in zip(r.variance_of_O, r.gradient_of_O, r.delta_phi_sq, r.zero_gradient):
            if not flag:
                assert dp == pytest.approx(v / g**2, rel=1e-12)
        d = r.to_dict()
        assert d["observable"] == r.observable.value
        assert d["master_seed"] == 4 and d["n_subensembles"] == 5


def test_subensemble_variance_is_binomial():
    """Var(O) across subensembles follows p(1-p)/n; doubling n halves it."""
    p = NetworkParams.reference(dt=0.05)
    fb = FeedbackConfig.zero()
    K = 200
    # exact p for P(count_d1 > 0) at t = 1 from a large reference ensemble
    ref = simulate_ensemble(cavity(1, 1), p.with_phase(0.2), fb, 1.0, 200_000, 123, sample_every=20, thresholds=(0,))
    pr = ref.exceed_count("d1", 0, 1.0) / ref.n_traj
    for n in (100, 200):
        r = phase_uncertainty(p, fb, 0.2, 0.05, (1.0,), K, n, 11, Observable.P_D1, threshold=0, strict=False)
        expected = pr * (1 - pr) / n
        # sample variance of K values has relative sd sqrt(2/(K-1))
        assert abs(r.variance_of_O[0] / expected - 1) < 4 * math.sqrt(2 / (K - 1))


def test_gradient_stable_when_halving_delta_phi():
    fb = FeedbackConfig.crossed()
    out = {}
    for d in (0.1, 0.05):
        out[d] = phase_uncertainty(COARSE, fb, math.pi / 10, d, (1.0,), 10, 2000, 5, Observable.P_D1)
    g1, s1 = out[0.1].gradient_of_O[0], out[0.1].gradient_stderr[0]
    g2, s2 = out[0.05].gradient_of_O[0], out[0.05].gradient_stderr[0]
    assert abs(g1 - g2) < 3 * math.hypot(s1, s2)
    # identical seeds at phi_star, so the variance is shared exactly
    assert out[0.1].variance_of_O == out[0.05].variance_of_O


def test_uncertainty_validation():
    with pytest.raises(ValueError):
        phase_uncertainties(COARSE, FeedbackConfig.crossed(), 0.1, 0.0)
    with pytest.raises(ValueError):
        phase_uncertainties(COARSE, FeedbackConfig.crossed(), 0.1, 0.05, n_subensembles=1)


def test_feedback_pulse_initial_state_runs():
    c = signal_curve(COARSE, FeedbackConfig.crossed(), [0.0, 1.0], 1.0, 50, 3, Observable.P_D1,
                     initial=InitialState("feedback_pulse"))
    assert len(c.points) == 2
