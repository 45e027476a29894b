"""Per-step physics of the monitored network.

Within one coarse-grained step of length dt each detector either stays dark
or registers (at least) one photon. A click fires the matching feedback
pulse, which displaces the detector-mode amplitudes by M_ab beta^(d); the
amplitudes then decay over the full step. The no-click probability of a
detector mode is exp(-|alpha_i|^2 (1 - exp(-kappa_i dt))).

The scalar kernels here are compiled with numba and shared by the public
wrappers, the trajectory sampler and the exhaustive enumerator so that all
three see identical arithmetic.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .network import (
    Basis,
    BasisMismatchError,
    BasisTransform,
    FeedbackConfig,
    ModeAmplitudes,
    NetworkParams,
    Transforms,
    build_transforms,
    change_basis,
    transform_derivative,
)


class JumpApproximationWarning(UserWarning):
    """Per-step click probability too large for the one-photon-per-bin model."""


class DetectionEvent(enum.IntEnum):
    # value bit 1 = detector 1 clicked, bit 0 = detector 2 clicked
    NO_CLICK = 0  # 00
    CLICK_D2 = 1  # 01
    CLICK_D1 = 2  # 10
    CLICK_BOTH = 3  # 11

    @property
    def increments(self) -> tuple[int, int]:
        return (self.value >> 1) & 1, self.value & 1

    @property
    def label(self) -> str:
        return f"{(self.value >> 1) & 1}{self.value & 1}"


@dataclass(frozen=True)
class EventProbabilities:
    p00: float
    p01: float
    p10: float
    p11: float

    def __post_init__(self) -> None:
        for p in self.as_tuple():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of range: {p!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.p00, self.p01, self.p10, self.p11

    @property
    def click(self) -> float:
        return self.p01 + self.p10 + self.p11

    def __getitem__(self, event: DetectionEvent) -> float:
        return self.as_tuple()[int(event)]


@dataclass(frozen=True)
class StateWithDerivative:
    """Detector-basis amplitudes together with their derivative in phi1."""

    alpha: ModeAmplitudes
    dalpha_dphi: tuple[complex, complex] = (0j, 0j)

    def __post_init__(self) -> None:
        if self.alpha.basis is not Basis.DETECTOR:
            raise BasisMismatchError("StateWithDerivative holds detector-basis amplitudes")
        d1, d2 = (complex(z) for z in self.dalpha_dphi)
        for z in (d1, d2):
            if not (math.isfinite(z.real) and math.isfinite(z.imag)):
                raise ValueError("derivative entries must be finite")
        object.__setattr__(self, "dalpha_dphi", (d1, d2))


# --------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True, nogil=True)
def _pop(z):
    return z.real * z.real + z.imag * z.imag


@numba.njit(cache=True, nogil=True)
def _event_probs(n1, n2, c1, c2):
    """(p00, p01, p10, p11) from mode populations and per-step emission factors."""
    x1 = n1 * c1
    x2 = n2 * c2
    q1 = math.exp(-x1)
    q2 = math.exp(-x2)
    e1 = -math.expm1(-x1)
    e2 = -math.expm1(-x2)
    return q1 * q2, q1 * e2, e1 * q2, e1 * e2


@numba.njit(cache=True, nogil=True)
def _event_probs_grad(a1, a2, da1, da2, c1, c2, p, dp):
    """Fill p[4] with event probabilities and dp[4] with their phi1-derivatives."""
    x1 = _pop(a1) * c1
    x2 = _pop(a2) * c2
    q1 = math.exp(-x1)
    q2 = math.exp(-x2)
    e1 = -math.expm1(-x1)
    e2 = -math.expm1(-x2)
    # d|a|^2 = 2 Re(conj(a) da); dq = -c q d|a|^2; de = -dq
    dq1 = -c1 * q1 * 2.0 * (a1.real * da1.real + a1.imag * da1.imag)
    dq2 = -c2 * q2 * 2.0 * (a2.real * da2.real + a2.imag * da2.imag)
    p[0] = q1 * q2
    p[1] = q1 * e2
    p[2] = e1 * q2
    p[3] = e1 * e2
    dp[0] = dq1 * q2 + q1 * dq2
    dp[1] = dq1 * e2 - q1 * dq2
    dp[2] = -dq1 * q2 + e1 * dq2
    dp[3] = -dq1 * e2 - e1 * dq2


@numba.njit(cache=True, nogil=True)
def _advance(a1, a2, ev, kicks, dec1, dec2):
    """Kick according to the event bits, then decay over one step."""
    if ev & 2:
        a1 += kicks[0, 0]
        a2 += kicks[0, 1]
    if ev & 1:
        a1 += kicks[1, 0]
        a2 += kicks[1, 1]
    return a1 * dec1, a2 * dec2


@numba.njit(cache=True, nogil=True)
def _sample_event(u, p00, p01, p10):
    # fixed cumulative order 00, 01, 10, 11
    s = p00
    if u < s:
        return 0
    s += p01
    if u < s:
        return 1
    s += p10
    if u < s:
        return 2
    return 3


# --------------------------------------------------------------------------
# step constants


@dataclass(frozen=True)
class StepConstants:
    """Everything a compiled step needs, as flat arrays.

    ``kicks[d]`` is the detector-basis displacement fired by a click in
    detector d+1 and ``dkicks[d]`` its phi1-derivative.
    """

    emit: np.ndarray  # (1 - exp(-kappa_i dt)) per mode
    decay: np.ndarray  # exp(-kappa_i dt / 2) per mode
    kicks: np.ndarray
    dkicks: np.ndarray

    @classmethod
    def build(cls, params: NetworkParams, fb: FeedbackConfig, dt: float | None = None) -> StepConstants:
        dt = params.dt if dt is None else dt
        tr = build_transforms(params)
        dmab = transform_derivative(params, "ab")
        emit = np.array([-math.expm1(-params.kappa1 * dt), -math.expm1(-params.kappa2 * dt)])
        decay = np.array([math.exp(-0.5 * params.kappa1 * dt), math.exp(-0.5 * params.kappa2 * dt)])
        kicks = np.empty((2, 2), dtype=np.complex128)
        dkicks = np.empty((2, 2), dtype=np.complex128)
        for d, beta in enumerate((fb.beta_d1, fb.beta_d2)):
            kicks[d] = tr.ab.apply(beta.a1, beta.a2)
            dkicks[d] = dmab.apply(beta.a1, beta.a2)
        for arr in (emit, decay, kicks, dkicks):
            arr.setflags(write=False)
        return cls(emit, decay, kicks, dkicks)


# --------------------------------------------------------------------------
# public operations


def _require_detector(alpha: ModeAmplitudes) -> None:
    if alpha.basis is not Basis.DETECTOR:
        raise BasisMismatchError(f"expected detector-basis amplitudes, got {alpha.basis.value!r}")


def no_photon_map(alpha: ModeAmplitudes, params: NetworkParams, t: float) -> ModeAmplitudes:
    _require_detector(alpha)
    if t < 0:
        raise ValueError("duration must be non-negative")
    return ModeAmplitudes(
        alpha.a1 * math.exp(-0.5 * params.kappa1 * t),
        alpha.a2 * math.exp(-0.5 * params.kappa2 * t),
        Basis.DETECTOR,
    )


def no_detection_factors(alpha: ModeAmplitudes, params: NetworkParams, t: float) -> tuple[float, float]:
    """Per-detector probabilities of staying dark over a window of length t."""
    _require_detector(alpha)
    if t < 0:
        raise ValueError("duration must be non-negative")
    n1, n2 = alpha.populations
    return (
        math.exp(n1 * math.expm1(-params.kappa1 * t)),
        math.exp(n2 * math.expm1(-params.kappa2 * t)),
    )


def no_detection_probability(alpha: ModeAmplitudes, params: NetworkParams, t: float) -> float:
    q1, q2 = no_detection_factors(alpha, params, t)
    return q1 * q2


def event_probabilities(alpha: ModeAmplitudes, params: NetworkParams, warn: bool = True) -> EventProbabilities:
    """Probabilities of the four detection outcomes in the next step of length dt.

    Emits :class:`JumpApproximationWarning` when the click probability exceeds
    ``params.eps_jump``.
    """
    _require_detector(alpha)
    n1, n2 = alpha.populations
    c1 = -math.expm1(-params.kappa1 * params.dt)
    c2 = -math.expm1(-params.kappa2 * params.dt)
    probs = EventProbabilities(*_event_probs(n1, n2, c1, c2))
    if warn and probs.click > params.eps_jump:
        warnings.warn(
            f"click probability {probs.click:.3g} per step exceeds eps_jump={params.eps_jump}; "
            "multi-photon bins are no longer negligible",
            JumpApproximationWarning,
            stacklevel=2,
        )
    return probs


def _kick(fb: FeedbackConfig, event: DetectionEvent) -> ModeAmplitudes:
    kick = ModeAmplitudes(0, 0, Basis.FEEDBACK)
    if event & 2:
        kick = kick + fb.beta_d1
    if event & 1:
        kick = kick + fb.beta_d2
    return kick


def apply_event(
    alpha: ModeAmplitudes,
    event: DetectionEvent,
    fb: FeedbackConfig,
    transforms: Transforms,
    params: NetworkParams,
    dt: float | None = None,
) -> ModeAmplitudes:
    """Instantaneous feedback kick for the clicked detectors, then decay over dt."""
    _require_detector(alpha)
    event = DetectionEvent(event)
    kicked = alpha
    if event != DetectionEvent.NO_CLICK:
        kicked = alpha + change_basis(_kick(fb, event), transforms.ab)
    return no_photon_map(kicked, params, params.dt if dt is None else dt)


def step_with_derivative(
    s: StateWithDerivative,
    event: DetectionEvent,
    fb: FeedbackConfig,
    transforms: Transforms,
    dmab: BasisTransform,
    params: NetworkParams,
    dt: float | None = None,
) -> StateWithDerivative:
    """Advance amplitudes and their phi1-derivative through one step.

    beta^(d) and the decay do not depend on phi1, so a click adds
    (dM_ab/dphi1) beta^(d) to the derivative and the decay rescales it.
    """
    event = DetectionEvent(event)
    dt = params.dt if dt is None else dt
    alpha = apply_event(s.alpha, event, fb, transforms, params, dt)
    d1, d2 = s.dalpha_dphi
    if event != DetectionEvent.NO_CLICK:
        if dmab.from_basis is not Basis.FEEDBACK or dmab.to_basis is not Basis.DETECTOR:
            raise BasisMismatchError("derivative transform must map feedback to detector basis")
        kick = _kick(fb, event)
        k1, k2 = dmab.apply(kick.a1, kick.a2)
        d1, d2 = d1 + k1, d2 + k2
    d1 *= math.exp(-0.5 * params.kappa1 * dt)
    d2 *= math.exp(-0.5 * params.kappa2 * dt)
    return StateWithDerivative(alpha, (d1, d2))


def initial_detector_state(gamma: ModeAmplitudes, params: NetworkParams) -> ModeAmplitudes:
    if gamma.basis is not Basis.CAVITY:
        raise BasisMismatchError("initial state must be given in the cavity basis")
    return change_basis(gamma, build_transforms(params).ac)
