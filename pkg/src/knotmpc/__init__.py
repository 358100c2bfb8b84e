"""Knot-parameterized model predictive control.

Condensed QP builders for linear MPC (with and without a knot-point
input parameterization), a compact ADMM solver, a vectorized
evolutionary solver over the same knot decision space, closed-loop
simulation against nonlinear pendulum and n-link arm plants, and a
benchmark harness with CSV output.
"""

from .bench import (
    BoxStats,
    ConfigError,
    ExperimentConfig,
    PRESETS,
    load_config,
    preset_config,
    run_experiment,
    summarize,
    time_solver,
)
from .closedloop import (
    Controller,
    MetricsReport,
    SimResult,
    actual_cost,
    apply_error_multiplier,
    compute_metrics,
    cost_ratio,
    itae,
    normalized_cost,
    percent_overshoot,
    rise_time,
    run_closed_loop,
)
from .condense import (
    FORMULATIONS,
    ConfigurationError,
    MpcSpec,
    PredictionMatrices,
    build,
    build_large,
    build_large_param,
    build_small,
    build_small_param,
    extract_first_input,
    objective_constant,
    prediction_matrices,
)
from .dynamics import (
    ContinuousLinearModel,
    DiscreteLinearModel,
    NLinkArm,
    NLinkParams,
    Pendulum,
    PendulumParams,
    SingularInertiaError,
    discretize,
    integrate,
    linearize,
    nlink_accel,
    nlink_mass_matrix,
    pendulum_accel,
    rk4_step,
    rollout,
    step,
    total_energy,
)
from .empc import (
    EmpcResult,
    EmpcSettings,
    Population,
    evaluate_cost,
    evolve_generation,
    init_population,
    solve_empc,
)
from .param import (
    KnotSchedule,
    KnotTrajectory,
    expand,
    input_at,
    interp_coeffs,
    interpolation_matrix,
    knot_spacing,
)
from .qp import AdmmSolver, QpProblem, QpSettings, QpSolution, solve_qp

__version__ = "0.1.0"

__all__ = [
    "AdmmSolver",
    "BoxStats",
    "ConfigError",
    "ConfigurationError",
    "ContinuousLinearModel",
    "Controller",
    "DiscreteLinearModel",
    "EmpcResult",
    "EmpcSettings",
    "ExperimentConfig",
    "FORMULATIONS",
    "KnotSchedule",
    "KnotTrajectory",
    "MetricsReport",
    "MpcSpec",
    "NLinkArm",
    "NLinkParams",
    "Pendulum",
    "PendulumParams",
    "Population",
    "PredictionMatrices",
    "PRESETS",
    "QpProblem",
    "QpSettings",
    "QpSolution",
    "SimResult",
    "SingularInertiaError",
    "actual_cost",
    "apply_error_multiplier",
    "build",
    "build_large",
    "build_large_param",
    "build_small",
    "build_small_param",
    "compute_metrics",
    "cost_ratio",
    "discretize",
    "evaluate_cost",
    "evolve_generation",
    "expand",
    "extract_first_input",
    "init_population",
    "input_at",
    "integrate",
    "interp_coeffs",
    "interpolation_matrix",
    "itae",
    "knot_spacing",
    "linearize",
    "load_config",
    "nlink_accel",
    "nlink_mass_matrix",
    "normalized_cost",
    "objective_constant",
    "pendulum_accel",
    "percent_overshoot",
    "preset_config",
    "prediction_matrices",
    "rise_time",
    "rk4_step",
    "rollout",
    "run_closed_loop",
    "run_experiment",
    "solve_empc",
    "solve_qp",
    "step",
    "summarize",
    "time_solver",
    "total_energy",
]
