import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpmetrology.dynamics import (
    DetectionEvent,
    apply_event,
    event_probabilities,
    initial_detector_state,
)
from jumpmetrology.fisher import (
    BudgetExceededError,
    enumerate_strings,
    feedback_pulse_start,
    fisher_information,
    fisher_monte_carlo,
    fisher_scan,
    fit_and_extrapolate,
    markov_diagnostics,
    markov_gap,
    string_probability_with_derivative,
)
from jumpmetrology.network import FeedbackConfig, NetworkParams, build_transforms, cavity

PI10 = math.pi / 10

# Enumerated at phi2 = pi/2, phi_tilde = pi/10, gamma = (1, 1), beta^(1) = (0, 1),
# beta^(2) = (2, 0). Cross-checked against the pure-Python oracle below (small N)
# and Monte Carlo sampling of the score (N = 6).
GOLDEN_FINE = (  # dt = 1e-3, N = 1..12
    0.0, 3.709170369295343e-06, 1.1133631352046894e-05, 2.2279521381853196e-05,
    3.7152997633403594e-05, 5.576023658000616e-05, 7.81074345571898e-05,
    0.0001042008083325895, 0.00013404659568233413, 0.0001676510559741667,
    0.0002050204707575398, 0.00024616114436094106,
)
GOLDEN_COARSE = (  # dt = 0.5, N = 1..6
    0.0, 0.21023222113097118, 0.5858537531514, 1.0743742914125747,
    1.658267729217806, 2.3385214847389144,
)


def string_prob(events, gamma, params, fb):
    """Reference probability of an event string using the public step functions."""
    t = build_transforms(params)
    a = initial_detector_state(gamma, params)
    P = 1.0
    for ev in events:
        P *= event_probabilities(a, params, warn=False)[DetectionEvent(ev)]
        a = apply_event(a, ev, fb, t, params)
    return P


def oracle_fisher(gamma, params, fb, n, h=1e-5):
    """Brute-force sum over 4^n strings with a central-difference derivative."""
    plus, minus = params.with_phase(params.phi_tilde + h), params.with_phase(params.phi_tilde - h)
    F = 0.0
    for s in itertools.product(range(4), repeat=n):
        P = string_prob(s, gamma, params, fb)
        if P > 1e-300:
            dP = (string_prob(s, gamma, plus, fb) - string_prob(s, gamma, minus, fb)) / (2 * h)
            F += dP * dP / P
    return F


@pytest.fixture
def coarse():
    return NetworkParams.reference(PI10, dt=0.5)


# ---------------------------------------------------------------- string probabilities


def test_vacuum_single_step():
    p = NetworkParams.reference()
    fb = FeedbackConfig.crossed()
    probs = [string_probability_with_derivative([e], cavity(0, 0), p, fb)[0] for e in range(4)]
    assert probs == [1.0, 0.0, 0.0, 0.0]


def test_zero_feedback_derivative_is_exactly_zero():
    p = NetworkParams.reference(0.3, dt=0.2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = rng.integers(0, 4, 7)
        assert string_probability_with_derivative(s, cavity(1, 1), p, FeedbackConfig.zero())[1] == 0.0


def test_string_probability_matches_reference(coarse, crossed_fb, gamma11):
    rng = np.random.default_rng(1)
    for _ in range(30):
        s = rng.integers(0, 4, 5)
        P, _ = string_probability_with_derivative(s, gamma11, coarse, crossed_fb)
        assert P == pytest.approx(string_prob(s, gamma11, coarse, crossed_fb), rel=1e-12, abs=1e-300)


@settings(max_examples=60)
@given(st.lists(st.integers(0, 3), min_size=6, max_size=6))
def test_string_derivative_matches_finite_difference(events):
    p = NetworkParams.reference(PI10, dt=0.1)
    fb = FeedbackConfig.crossed(1.0, 2.0)
    h = 1e-5
    P, dP = string_probability_with_derivative(events, cavity(1, 1), p, fb)
    Pp, _ = string_probability_with_derivative(events, cavity(1, 1), p.with_phase(PI10 + h), fb)
    Pm, _ = string_probability_with_derivative(events, cavity(1, 1), p.with_phase(PI10 - h), fb)
    fd = (Pp - Pm) / (2 * h)
    if abs(dP) < 1e-12 * P:
        assert abs(fd) < 1e-8 * P
    else:
        assert abs(fd - dP) <= 1e-6 * abs(dP)


def test_bad_event_codes():
    with pytest.raises(ValueError):
        string_probability_with_derivative([0, 4], cavity(1, 1), NetworkParams(), FeedbackConfig.crossed())
    with pytest.raises(ValueError):
        string_probability_with_derivative([], cavity(1, 1), NetworkParams(), FeedbackConfig.crossed())


# ---------------------------------------------------------------- enumeration


def test_enumeration_normalised_and_matches_reference(coarse, crossed_fb, gamma11):
    probs = enumerate_strings(gamma11, coarse, crossed_fb, 4)
    assert abs(math.fsum(probs) - 1) < 1e-12
    for idx in (0, 1, 37, 200, 255):
        s = [(idx >> (2 * (3 - k))) & 3 for k in range(4)]
        assert probs[idx] == pytest.approx(string_prob(s, gamma11, coarse, crossed_fb), rel=1e-12, abs=1e-300)


def test_zero_feedback_law_factorises(gamma11):
    p = NetworkParams.reference(0.2, dt=0.4)
    probs = enumerate_strings(gamma11, p, FeedbackConfig.zero(), 4).reshape(4, 4, 4, 4)
    a = initial_detector_state(gamma11, p)
    marg = []
    for _ in range(4):
        marg.append(np.array(event_probabilities(a, p, warn=False).as_tuple()))
        a = apply_event(a, 0, FeedbackConfig.zero(), build_transforms(p), p)
    prod = np.einsum("i,j,k,l->ijkl", *marg)
    assert np.max(np.abs(probs - prod)) < 1e-12


def test_budget_cap(gamma11, crossed_fb):
    with pytest.raises(BudgetExceededError):
        fisher_scan(gamma11, NetworkParams.reference(), crossed_fb, 15)
    with pytest.raises(BudgetExceededError):
        fisher_scan(gamma11, NetworkParams.reference(), crossed_fb, 5, cap=4)
    with pytest.raises(ValueError):
        fisher_scan(gamma11, NetworkParams.reference(), crossed_fb, 0)


# ---------------------------------------------------------------- Fisher information


def test_f1_is_zero(gamma11, crossed_fb):
    for phi in (0.0, PI10, 2.0):
        assert fisher_information(gamma11, NetworkParams.reference(phi, dt=0.3), crossed_fb, 1) == 0.0


def test_zero_feedback_no_information(gamma11):
    res = fisher_scan(gamma11, NetworkParams.reference(PI10, dt=0.5), FeedbackConfig.zero(), 6)
    assert all(abs(f) <= 1e-12 for f in res.F)
    assert res.fit.no_information and math.isinf(res.bound(10.0))


def test_fisher_matches_bruteforce_oracle(coarse, crossed_fb, gamma11):
    F = fisher_scan(gamma11, coarse, crossed_fb, 4).F
    for n in (2, 3, 4):
        assert F[n - 1] == pytest.approx(oracle_fisher(gamma11, coarse, crossed_fb, n), rel=1e-6)


def test_fisher_scan_consistent_with_single_depth(coarse, crossed_fb, gamma11):
    res = fisher_scan(gamma11, coarse, crossed_fb, 5)
    for n in (1, 3, 5):
        assert res.F[n - 1] == pytest.approx(fisher_information(gamma11, coarse, crossed_fb, n), rel=1e-13)
    assert all(abs(t - 1) < 1e-10 for t in res.total_probability)


def test_fisher_non_negative_and_non_decreasing(coarse, crossed_fb, gamma11):
    for p in (coarse, coarse.with_phase(1.3), NetworkParams.reference(0.4, dt=0.05)):
        F = fisher_scan(gamma11, p, crossed_fb, 7).F
        assert min(F) >= 0
        assert all(b >= a - 1e-12 * max(1, b) for a, b in zip(F, F[1:]))


def test_fisher_worker_independence(coarse, crossed_fb, gamma11):
    a = fisher_scan(gamma11, coarse, crossed_fb, 8, workers=1).F
    b = fisher_scan(gamma11, coarse, crossed_fb, 8, workers=8).F
    assert a == b


def test_golden_coarse(coarse, crossed_fb, gamma11):
    F = fisher_scan(gamma11, coarse, crossed_fb, 6).F
    np.testing.assert_allclose(F, GOLDEN_COARSE, rtol=1e-12, atol=1e-15)


def test_golden_fine(crossed_fb, gamma11):
    F = fisher_scan(gamma11, NetworkParams.reference(PI10), crossed_fb, 12).F
    np.testing.assert_allclose(F, GOLDEN_FINE, rtol=1e-10, atol=1e-18)


def test_monte_carlo_score_agrees(coarse, crossed_fb, gamma11):
    mean, se = fisher_monte_carlo(gamma11, coarse, crossed_fb, 6, 100_000, 99)
    assert abs(mean - GOLDEN_COARSE[-1]) < 3 * se


def test_fisher_dt_independent_of_params_dt(crossed_fb, gamma11):
    fine = NetworkParams.reference(PI10)
    a = fisher_scan(gamma11, fine, crossed_fb, 4, dt=0.5).F
    b = fisher_scan(gamma11, NetworkParams.reference(PI10, dt=0.5), crossed_fb, 4).F
    assert a == b


def test_feedback_pulse_start_has_phase_derivative(crossed_fb):
    p = NetworkParams.reference(PI10, dt=0.5)
    s = feedback_pulse_start(p, crossed_fb)
    assert s.dalpha_dphi != (0j, 0j)
    # with a phi1-dependent start even a single step carries information
    assert fisher_information(s, p, crossed_fb, 1) > 0


# ---------------------------------------------------------------- fit


def test_fit_exact_quadratic():
    n = np.arange(2, 13)
    fit = fit_and_extrapolate(n, n * n - n, dt=1e-3)
    assert fit.a == pytest.approx(1, abs=1e-12) and fit.b == pytest.approx(-1, abs=1e-12)
    assert fit.r_squared == pytest.approx(1, abs=1e-12)
    assert fit.bound(1.0) == pytest.approx(1 / (1e6 - 1e3))


def test_fit_all_zero_is_no_information():
    fit = fit_and_extrapolate([1, 2, 3], [0, 0, 0], dt=0.1)
    assert fit.no_information and math.isinf(fit.bound(5.0))


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_and_extrapolate([1, 2], [0, 1], dt=0.1)


def test_reference_scaling_fit(crossed_fb, gamma11):
    fit = fit_and_extrapolate(range(2, 13), GOLDEN_FINE[1:], 1e-3)
    assert fit.a > 0 and fit.b < 0 and fit.r_squared >= 0.99


# ---------------------------------------------------------------- Markov diagnostics


def test_markov_gap_zero_without_feedback(gamma11):
    assert markov_gap(gamma11, NetworkParams.reference(PI10, dt=0.5), FeedbackConfig.zero(), 3) < 1e-12


def test_markov_gap_positive_with_feedback(coarse, crossed_fb, gamma11):
    assert markov_gap(gamma11, coarse, crossed_fb, 3) > 0


def test_markov_conditionals_are_distributions(coarse, crossed_fb, gamma11):
    d = markov_diagnostics(gamma11, coarse, crossed_fb, 4)
    rows = d.given_last.sum(axis=1)
    assert np.all(np.abs(rows[np.isfinite(rows)] - 1) < 1e-12)
    rows2 = d.given_last_two.sum(axis=2)
    assert np.all(np.abs(rows2[np.isfinite(rows2)] - 1) < 1e-12)


def test_markov_needs_three_steps(coarse, crossed_fb, gamma11):
    with pytest.raises(ValueError):
        markov_gap(gamma11, coarse, crossed_fb, 2)
