"""Polyatomic ellipsoidal BGK simulator and linear-theory verification workbench."""

from .grid import GridError, ModelParams, PhaseGrid, build_grid, global_maxwellian, inner_product, norm
from .maxwellian import MomentTarget, ellipsoidal_maxwellian, h_functional, moment_match
from .moments import InvalidFieldError, MacroState, compute_moments
from .solver import Diagnostics, SolverAbort, SolverConfig, relaxation_step, run, transport_step

__all__ = [
    "Diagnostics", "GridError", "InvalidFieldError", "MacroState", "ModelParams", "MomentTarget",
    "PhaseGrid", "SolverAbort", "SolverConfig", "build_grid", "compute_moments",
    "ellipsoidal_maxwellian", "global_maxwellian", "h_functional", "inner_product",
    "moment_match", "norm", "relaxation_step", "run", "transport_step",
]
