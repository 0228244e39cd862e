"""Test-space-only ultraweak Petrov-Galerkin solver for stationary reactive transport.

The transport problem ``div(b u) + c u = f`` with inflow data ``u = g`` is
discretized through the normal equation of its ultraweak form, which lives on
a continuous Lagrange test space only. The solution is recovered pointwise as
``u = -b . grad w + c w`` (plus the outflow trace of ``w``).
"""

from .coefficients import (
    BoundaryData,
    BoxIndicatorField,
    ConstantField,
    DarcyVelocity,
    constant_velocity,
    inflow_data,
    permeability,
    reaction,
)
from .darcy import mass_balance, solve_pressure
from .linalg import KrylovReport, Precond, bicgstab_solve, cg_solve, estimate_condition
from .mesh import CHANNEL_GEOMETRY, FILTER_GEOMETRY, AlignmentError, Label, Segment, Space, build_mesh
from .reconstruct import eval_u, l2_error_volume, outflow_trace, qoi_outflow_flux, voxelize
from .reference_dg import solve_dg
from .study import ConfigError, Preset, RunConfig, run_condition_study, run_convergence, run_single
from .ultraweak import assemble_gram, assemble_rhs, build_system, check_orthogonality, solve_ultraweak

__version__ = "0.1.0"

__all__ = [
    "BoundaryData",
    "BoxIndicatorField",
    "ConstantField",
    "DarcyVelocity",
    "constant_velocity",
    "inflow_data",
    "permeability",
    "reaction",
    "mass_balance",
    "solve_pressure",
    "KrylovReport",
    "Precond",
    "bicgstab_solve",
    "cg_solve",
    "estimate_condition",
    "CHANNEL_GEOMETRY",
    "FILTER_GEOMETRY",
    "AlignmentError",
    "Label",
    "Segment",
    "Space",
    "build_mesh",
    "eval_u",
    "l2_error_volume",
    "outflow_trace",
    "qoi_outflow_flux",
    "voxelize",
    "solve_dg",
    "ConfigError",
    "Preset",
    "RunConfig",
    "run_condition_study",
    "run_convergence",
    "run_single",
    "assemble_gram",
    "assemble_rhs",
    "build_system",
    "check_orthogonality",
    "solve_ultraweak",
]
