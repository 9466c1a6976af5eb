"""Solver and regularity diagnostics for first-order variational mean
field games on the flat torus (d = 1, 2)."""

from .energies import (
    DualState,
    PrimalState,
    duality_gap,
    eval_A_stat,
    eval_A_td,
    eval_B_stat,
    eval_B_td,
    feasibility_report,
)
from .grid import FluxField, GridSpec, ScalarField
from .kernel import CoercivityMaps, verify_coercivity
from .model import InfeasibleModel, ModelOnGrid, ModelSpec
from .solver import NonConvergence, SolveOptions, SolveReport, resume, solve_stationary, solve_time_dependent

__all__ = [
    "CoercivityMaps",
    "DualState",
    "FluxField",
    "GridSpec",
    "InfeasibleModel",
    "ModelOnGrid",
    "ModelSpec",
    "NonConvergence",
    "PrimalState",
    "ScalarField",
    "SolveOptions",
    "SolveReport",
    "duality_gap",
    "eval_A_stat",
    "eval_A_td",
    "eval_B_stat",
    "eval_B_td",
    "feasibility_report",
    "resume",
    "solve_stationary",
    "solve_time_dependent",
    "verify_coercivity",
]

__version__ = "0.1.0"
