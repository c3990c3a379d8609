"""Delay differential equations: solution, delay sensitivities, adjoints and delay optimization."""

__version__ = "0.1.0"

from .adjoint import AdjointTrajectory, solve_adjoint, solve_adjoint_derivative
from .cost import (
    CostReport,
    compute_report,
    evaluate_cost,
    gradient_adjoint,
    gradient_forward,
    hessian_adjoint,
    hessian_forward,
)
from .errors import (
    ConfigError,
    DelayOptError,
    DomainError,
    ExprSyntaxError,
    InfeasibleStart,
    NonFinite,
    NonSmooth,
    OutOfDomain,
    ProblemError,
    UnknownIdentifier,
)
from .expr import Expr, ExprTimeFunction, ExprVectorField, HyperDual, eval_with_derivatives, parse
from .integrator import CompatibilityReport, IntegratorConfig, check_compatibility, solve_state
from .model import (
    BreakpointMesh,
    DelayProblem,
    LinearField,
    TimeFunction,
    Trajectory,
    ZeroField,
    build_breakpoint_mesh,
    eval_trajectory,
)
from .optimizer import OptimizeResult, certify, optimize, project
from .oracles import ClosedFormExample51, example51, example51_problem, fd_oracle, tracking_case
from .problem_file import load_problem, problem_from_dict
from .sensitivity import SensitivityBundle, compute_sensitivities, first_order, mixed_second, second_order

__all__ = [
    "AdjointTrajectory",
    "BreakpointMesh",
    "ClosedFormExample51",
    "CompatibilityReport",
    "ConfigError",
    "CostReport",
    "DelayOptError",
    "DelayProblem",
    "DomainError",
    "Expr",
    "ExprSyntaxError",
    "ExprTimeFunction",
    "ExprVectorField",
    "HyperDual",
    "InfeasibleStart",
    "IntegratorConfig",
    "LinearField",
    "NonFinite",
    "NonSmooth",
    "OptimizeResult",
    "OutOfDomain",
    "ProblemError",
    "SensitivityBundle",
    "TimeFunction",
    "Trajectory",
    "UnknownIdentifier",
    "ZeroField",
    "build_breakpoint_mesh",
    "certify",
    "check_compatibility",
    "compute_report",
    "compute_sensitivities",
    "eval_trajectory",
    "eval_with_derivatives",
    "evaluate_cost",
    "example51",
    "example51_problem",
    "fd_oracle",
    "first_order",
    "gradient_adjoint",
    "gradient_forward",
    "hessian_adjoint",
    "hessian_forward",
    "load_problem",
    "mixed_second",
    "optimize",
    "parse",
    "problem_from_dict",
    "project",
    "second_order",
    "solve_adjoint",
    "solve_adjoint_derivative",
    "solve_state",
    "tracking_case",
]
