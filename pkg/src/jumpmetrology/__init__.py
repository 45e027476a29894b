"""Quantum-jump simulation of a two-cavity feedback network and its phase sensitivity."""

from .network import (
    REFERENCE_PHI2,
    Basis,
    BasisMismatchError,
    BasisTransform,
    FeedbackConfig,
    ModeAmplitudes,
    NetworkParams,
    build_transforms,
    cavity,
    change_basis,
    closed_form_mab,
    detector,
    feedback,
    feedback_pulse_state,
    transform_derivative,
)
from .dynamics import (
    DetectionEvent,
    EventProbabilities,
    JumpApproximationWarning,
    StateWithDerivative,
    apply_event,
    event_probabilities,
    no_detection_probability,
    no_photon_map,
    step_with_derivative,
)
from .trajectory import (
    EnsembleStats,
    InitialState,
    TrajectoryClass,
    TrajectoryRecord,
    classify_trajectory,
    derive_seed,
    simulate_ensemble,
    simulate_records,
    simulate_trajectory,
)
from .estimator import (
    Observable,
    SignalCurve,
    UncertaintyResult,
    ZeroGradientError,
    phase_uncertainties,
    phase_uncertainty,
    signal_curve,
    signal_curves,
)
from .fisher import (
    BudgetExceededError,
    FisherResult,
    ScalingFit,
    enumerate_strings,
    fisher_information,
    fisher_scan,
    fit_and_extrapolate,
    markov_gap,
    string_probability_with_derivative,
)
from .config import ConfigError, RunConfig

__version__ = "0.1.0"
