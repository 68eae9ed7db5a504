"""Optimal harvesting-seeding policies for stochastic interacting populations.

The toolkit discretizes the controlled diffusion into a locally
consistent Markov chain on a truncated lattice, solves the resulting
dynamic program by value iteration, audits the solution against the
structural theory (complementarity residuals, gradient bounds, policy
shape), and cross-checks it by Monte-Carlo simulation of the controlled
paths.
"""

from .grid import Grid, GridError, build_grid
from .kernel import (
    DiffusionStep,
    KernelError,
    TransitionKernel,
    build_kernel,
    control_transition,
    diffusion_transitions,
    q_factor,
)
from .model import (
    Model,
    ModelError,
    PRESET_IDS,
    ValidationCheck,
    ValidationReport,
    constant_price,
    make_preset,
    piecewise_affine_cost,
    validate,
)
from .scenario import Scenario, ScenarioError
from .simulate import (
    Path,
    PayoffEstimate,
    SimOptions,
    SimulationError,
    Strategy,
    estimate_value,
    simulate_path,
)
from .solver import (
    BellmanOperator,
    SolveOptions,
    SolveReport,
    SolverError,
    Thresholds1D,
    bellman_update,
    current_harvest_potential,
    extract_thresholds_1d,
    solve,
)
from .verify import (
    AuditCheck,
    AuditReport,
    ResidualField,
    audit_inequalities,
    hjb_residuals,
    residual_checks,
    residual_tolerance,
)

__version__ = "0.1.0"

__all__ = [
    "AuditCheck",
    "AuditReport",
    "BellmanOperator",
    "DiffusionStep",
    "Grid",
    "GridError",
    "KernelError",
    "Model",
    "ModelError",
    "PRESET_IDS",
    "Path",
    "PayoffEstimate",
    "ResidualField",
    "Scenario",
    "ScenarioError",
    "SimOptions",
    "SimulationError",
    "SolveOptions",
    "SolveReport",
    "SolverError",
    "Strategy",
    "Thresholds1D",
    "TransitionKernel",
    "ValidationCheck",
    "ValidationReport",
    "audit_inequalities",
    "bellman_update",
    "build_grid",
    "build_kernel",
    "constant_price",
    "control_transition",
    "current_harvest_potential",
    "diffusion_transitions",
    "estimate_value",
    "extract_thresholds_1d",
    "hjb_residuals",
    "make_preset",
    "piecewise_affine_cost",
    "q_factor",
    "residual_checks",
    "residual_tolerance",
    "simulate_path",
    "solve",
    "validate",
]
