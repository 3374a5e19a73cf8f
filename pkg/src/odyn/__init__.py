"""Overlap dynamics of one-pass SGD in two-layer teacher-student networks.

Simulators (weight space and exact overlap process), expectation engine for
the drift functions, and integrators for the deterministic limits.
"""
__version__ = "0.1.0"

from .activations import Activation
from .config import ExperimentConfig, SweepSpec
from .drifts import psi_gf, psi_m, psi_noise, psi_perp, psi_var, risk
from .errors import (
    BoundednessViolation,
    ConfigError,
    DivergenceError,
    NullOrthogonalSpaceError,
    NumericalAbort,
    PSDViolation,
    SingularTeacherError,
    TeacherRankError,
    UnsupportedStrategyError,
)
from .gaussian import CorrelationQuery, EvalStrategy, correlation
from .meanfield import mf_expected_psi, mf_expected_risk
from .overlaps import (
    OverlapState,
    ReducedMFState,
    TeacherSpec,
    WeightState,
    XiModel,
    bar_omega,
    init_student,
    make_teacher,
    overlaps_of,
    q_perp,
    reduce_to_mf,
    sample_tilde_omega,
)
from .trajectory import Trajectory

__all__ = [
    "Activation",
    "BoundednessViolation",
    "ConfigError",
    "CorrelationQuery",
    "DivergenceError",
    "EvalStrategy",
    "ExperimentConfig",
    "NullOrthogonalSpaceError",
    "NumericalAbort",
    "OverlapState",
    "PSDViolation",
    "ReducedMFState",
    "SingularTeacherError",
    "SweepSpec",
    "TeacherRankError",
    "TeacherSpec",
    "Trajectory",
    "UnsupportedStrategyError",
    "WeightState",
    "XiModel",
    "bar_omega",
    "correlation",
    "init_student",
    "make_teacher",
    "mf_expected_psi",
    "mf_expected_risk",
    "overlaps_of",
    "psi_gf",
    "psi_m",
    "psi_noise",
    "psi_perp",
    "psi_var",
    "q_perp",
    "reduce_to_mf",
    "risk",
    "sample_tilde_omega",
]
