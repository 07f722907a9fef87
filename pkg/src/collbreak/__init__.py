"""Discrete collision-induced breakage with mass transfer: kernels, daughter
distributions, a conservative finite-cap solver, trajectory checks and
stationary-state search."""

from .analysis import CheckParams, check_trajectory, delta0, fit_envelope_constant, gronwall_envelope, moment_envelope
from .daughter import (
    CustomTable,
    DaughterSpec,
    KeepTwo,
    NoMassTransfer,
    ShatterAttach,
    Uniform,
    fit_moment_constants,
    validate_daughter,
)
from .integrator import IntegratorConfig, StiffnessError, Trajectory, integrate, step
from .kernel import CollisionKernel, eval_kernel, eval_truncated_kernel
from .report import CheckReport
from .rhs import Problem, rhs
from .state import StateVector, make_initial, moment, moments, y1_distance
from .stationary import (
    StationaryResult,
    find_stationary_accelerated,
    find_stationary_by_flow,
    verify_stationary,
)

__version__ = "0.1.0"

__all__ = [
    "CheckParams", "CheckReport", "CollisionKernel", "CustomTable", "DaughterSpec", "IntegratorConfig",
    "KeepTwo", "NoMassTransfer", "Problem", "ShatterAttach", "StateVector", "StationaryResult",
    "StiffnessError", "Trajectory", "Uniform", "check_trajectory", "delta0", "eval_kernel",
    "eval_truncated_kernel", "find_stationary_accelerated", "find_stationary_by_flow",
    "fit_envelope_constant", "fit_moment_constants", "gronwall_envelope", "integrate", "make_initial",
    "moment", "moment_envelope", "moments", "rhs", "step", "validate_daughter", "verify_stationary",
    "y1_distance",
]
