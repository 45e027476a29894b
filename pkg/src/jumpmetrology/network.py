"""Two-mode coherent-state network: amplitudes, parameters and basis transforms.

The cavities are always in a product coherent state, so the whole quantum
state is a pair of complex amplitudes. The same state can be written in the
cavity modes (c), the detector modes (a) or the feedback-laser modes (b);
the 2x2 unitaries connecting them are built here by hand.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

SQRT_HALF = 1.0 / math.sqrt(2.0)
# Held phase on the detector-side arm for the reference runs. With
# gamma(0) = (1, 1) it leaves detector mode 2 empty at phi_tilde = 0.
REFERENCE_PHI2 = math.pi / 2


class Basis(enum.Enum):
    CAVITY = "c"
    DETECTOR = "a"
    FEEDBACK = "b"


class BasisMismatchError(ValueError):
    """Raised when a transform is applied to amplitudes in the wrong basis."""


def _check_finite(*values: complex) -> None:
    for v in values:
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise ValueError(f"amplitude entries must be finite, got {v!r}")


@dataclass(frozen=True)
class ModeAmplitudes:
    a1: complex
    a2: complex
    basis: Basis

    def __post_init__(self) -> None:
        object.__setattr__(self, "a1", complex(self.a1))
        object.__setattr__(self, "a2", complex(self.a2))
        if not isinstance(self.basis, Basis):
            raise TypeError(f"basis must be a Basis, got {self.basis!r}")
        _check_finite(self.a1, self.a2)

    @property
    def norm_sq(self) -> float:
        return abs(self.a1) ** 2 + abs(self.a2) ** 2

    @property
    def populations(self) -> tuple[float, float]:
        return abs(self.a1) ** 2, abs(self.a2) ** 2

    def __add__(self, other: ModeAmplitudes) -> ModeAmplitudes:
        if other.basis is not self.basis:
            raise BasisMismatchError(f"cannot add {other.basis} to {self.basis}")
        return ModeAmplitudes(self.a1 + other.a1, self.a2 + other.a2, self.basis)


def cavity(g1: complex, g2: complex) -> ModeAmplitudes:
    return ModeAmplitudes(g1, g2, Basis.CAVITY)


def detector(a1: complex, a2: complex) -> ModeAmplitudes:
    return ModeAmplitudes(a1, a2, Basis.DETECTOR)


def feedback(b1: complex, b2: complex) -> ModeAmplitudes:
    return ModeAmplitudes(b1, b2, Basis.FEEDBACK)


@dataclass(frozen=True)
class NetworkParams:
    """Phases, detector-mode decay rates and coarse-graining step.

    Rates are in units of a reference rate kappa and times in 1/kappa.
    ``eps_jump`` is the per-step click probability above which the
    one-photon-per-bin approximation is reported as unsound, and
    ``abort_population`` the |alpha_i|^2 at which a trajectory is stopped
    to avoid floating-point overflow.
    """

    phi1: float = 0.0
    phi2: float = 0.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    dt: float = 1e-3
    eps_jump: float = 0.05
    abort_population: float = 1e12

    def __post_init__(self) -> None:
        for name in ("phi1", "phi2", "kappa1", "kappa2", "dt", "eps_jump", "abort_population"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.kappa1 <= 0 or self.kappa2 <= 0:
            raise ValueError("decay rates must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.eps_jump <= 1:
            raise ValueError("eps_jump must lie in (0, 1]")
        if self.abort_population <= 0:
            raise ValueError("abort_population must be positive")

    @property
    def phi_tilde(self) -> float:
        return self.phi1 - self.phi2

    @classmethod
    def reference(cls, phi_tilde: float = 0.0, dt: float = 1e-3) -> NetworkParams:
        """Reference parameters: kappa1 = kappa2 = 1, phi2 = REFERENCE_PHI2."""
        return cls(phi1=REFERENCE_PHI2 + phi_tilde, phi2=REFERENCE_PHI2, dt=dt)

    def with_phase(self, phi_tilde: float) -> NetworkParams:
        """Same network with phi2 held and phi1 = phi2 + phi_tilde."""
        return NetworkParams(
            phi1=self.phi2 + phi_tilde,
            phi2=self.phi2,
            kappa1=self.kappa1,
            kappa2=self.kappa2,
            dt=self.dt,
            eps_jump=self.eps_jump,
            abort_population=self.abort_population,
        )

    def with_dt(self, dt: float) -> NetworkParams:
        return NetworkParams(
            self.phi1, self.phi2, self.kappa1, self.kappa2, dt, self.eps_jump, self.abort_population
        )


@dataclass(frozen=True)
class BasisTransform:
    """2x2 complex matrix taking amplitudes from one mode basis to another."""

    m11: complex
    m12: complex
    m21: complex
    m22: complex
    from_basis: Basis
    to_basis: Basis

    def __matmul__(self, other: BasisTransform) -> BasisTransform:
        # self after other
        if other.to_basis is not self.from_basis:
            raise BasisMismatchError(
                f"cannot compose {other.from_basis}->{other.to_basis} with "
                f"{self.from_basis}->{self.to_basis}"
            )
        return BasisTransform(
            self.m11 * other.m11 + self.m12 * other.m21,
            self.m11 * other.m12 + self.m12 * other.m22,
            self.m21 * other.m11 + self.m22 * other.m21,
            self.m21 * other.m12 + self.m22 * other.m22,
            other.from_basis,
            self.to_basis,
        )

    def dagger(self) -> BasisTransform:
        return BasisTransform(
            self.m11.conjugate(),
            self.m21.conjugate(),
            self.m12.conjugate(),
            self.m22.conjugate(),
            self.to_basis,
            self.from_basis,
        )

    def det(self) -> complex:
        return self.m11 * self.m22 - self.m12 * self.m21

    def apply(self, x1: complex, x2: complex) -> tuple[complex, complex]:
        """Raw matrix-vector product without basis bookkeeping."""
        return self.m11 * x1 + self.m12 * x2, self.m21 * x1 + self.m22 * x2

    def entries(self) -> tuple[complex, complex, complex, complex]:
        return self.m11, self.m12, self.m21, self.m22

    def unitarity_defect(self) -> float:
        """Max-entry deviation of M^dagger M from the identity."""
        g = self.dagger() @ self
        return max(abs(g.m11 - 1), abs(g.m12), abs(g.m21), abs(g.m22 - 1))


class Transforms(NamedTuple):
    cb: BasisTransform
    ac: BasisTransform
    ab: BasisTransform


def beamsplitter(from_basis: Basis, to_basis: Basis) -> BasisTransform:
    s = SQRT_HALF
    return BasisTransform(s, 1j * s, 1j * s, s, from_basis, to_basis)


def build_transforms(params: NetworkParams) -> Transforms:
    """Return M_cb (b -> c), M_ac (c -> a) and M_ab = M_ac M_cb (b -> a)."""
    e1 = cmath.exp(1j * params.phi1)
    e2 = cmath.exp(1j * params.phi2)
    # phase shifter phi1 on the second cavity after the feedback beamsplitter
    s_phi1 = BasisTransform(1, 0, 0, e1, Basis.CAVITY, Basis.CAVITY)
    # phase shifter phi2 on the first cavity output before the detector beamsplitter
    s_phi2 = BasisTransform(e2, 0, 0, 1, Basis.CAVITY, Basis.CAVITY)
    m_cb = s_phi1 @ beamsplitter(Basis.FEEDBACK, Basis.CAVITY)
    m_ac = beamsplitter(Basis.CAVITY, Basis.DETECTOR) @ s_phi2
    return Transforms(cb=m_cb, ac=m_ac, ab=m_ac @ m_cb)


def closed_form_mab(params: NetworkParams) -> BasisTransform:
    """M_ab written out entrywise, independent of the matrix product."""
    e1 = cmath.exp(1j * params.phi1)
    e2 = cmath.exp(1j * params.phi2)
    return BasisTransform(
        0.5 * (e2 - e1),
        0.5j * (e1 + e2),
        0.5j * (e1 + e2),
        0.5 * (e1 - e2),
        Basis.FEEDBACK,
        Basis.DETECTOR,
    )


def change_basis(state: ModeAmplitudes, t: BasisTransform) -> ModeAmplitudes:
    if state.basis is not t.from_basis:
        raise BasisMismatchError(
            f"state is in basis {state.basis.value!r}, transform expects {t.from_basis.value!r}"
        )
    y1, y2 = t.apply(state.a1, state.a2)
    return ModeAmplitudes(y1, y2, t.to_basis)


def transform_derivative(params: NetworkParams, which: str = "ab") -> BasisTransform:
    """Entrywise d/dphi1 of one of the network transforms at fixed phi2.

    ``which`` selects ``"ab"`` (the one the Fisher calculation needs),
    ``"cb"`` or ``"ac"``; the latter does not depend on phi1 and gives zeros.
    """
    e1 = cmath.exp(1j * params.phi1)
    if which == "ab":
        return BasisTransform(
            -0.5j * e1, -0.5 * e1, -0.5 * e1, 0.5j * e1, Basis.FEEDBACK, Basis.DETECTOR
        )
    if which == "cb":
        s = SQRT_HALF
        return BasisTransform(0, 0, -s * e1, 1j * s * e1, Basis.FEEDBACK, Basis.CAVITY)
    if which == "ac":
        return BasisTransform(0, 0, 0, 0, Basis.CAVITY, Basis.DETECTOR)
    raise ValueError(f"unknown transform {which!r}; expected 'ab', 'cb' or 'ac'")


@dataclass(frozen=True)
class FeedbackConfig:
    """Feedback vectors in the laser basis, fired on a click in detector 1 or 2."""

    beta_d1: ModeAmplitudes
    beta_d2: ModeAmplitudes

    def __post_init__(self) -> None:
        for name in ("beta_d1", "beta_d2"):
            if getattr(self, name).basis is not Basis.FEEDBACK:
                raise BasisMismatchError(f"{name} must be given in the feedback (b) basis")

    @classmethod
    def crossed(cls, beta2_on_d1: complex = 1.0, beta1_on_d2: complex = 2.0) -> FeedbackConfig:
        """Detector 1 drives laser 2 and detector 2 drives laser 1."""
        return cls(feedback(0, beta2_on_d1), feedback(beta1_on_d2, 0))

    @classmethod
    def zero(cls) -> FeedbackConfig:
        return cls(feedback(0, 0), feedback(0, 0))

    @property
    def is_zero(self) -> bool:
        return self.beta_d1.norm_sq == 0 and self.beta_d2.norm_sq == 0


def feedback_pulse_state(params: NetworkParams, fb: FeedbackConfig) -> ModeAmplitudes:
    """Cavity state obtained from vacuum by firing both feedback pulses once."""
    t = build_transforms(params)
    return change_basis(fb.beta_d1 + fb.beta_d2, t.cb)
