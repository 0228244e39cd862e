"""
Darcy velocity for the catalytic filter
=======================================

The transport velocity comes from a pressure solve, ``-div(k grad p) = 0`` with
``p = 1`` on the inflow segment, ``p = 0`` on the outflow segment and no flux
through the walls. The washcoat strip ``0.4 < y < 0.6`` is ten times less
permeable than the rest of the channel.
"""

from pathlib import Path

import numpy as np

from uwtransport import io
from uwtransport.coefficients import permeability
from uwtransport.darcy import darcy_energy, mass_balance, solve_pressure
from uwtransport.mesh import FILTER_GEOMETRY, build_mesh, cell_points, gauss_rule

out = Path("demo_output")
out.mkdir(exist_ok=True)

# Q2 pressure with an algebraic multigrid preconditioner.
for n in (15, 30, 60, 120):
    mesh = build_mesh(n, n, FILTER_GEOMETRY)
    sol = solve_pressure(mesh, permeability(0.1, mesh=mesh), order=2, precond="amg")
    mb = mass_balance(sol)
    cons = mass_balance(sol, method="consistent")
    cells, local, _ = cell_points(mesh, gauss_rule(3).points)
    speed = np.linalg.norm(sol.velocity.at(mesh, cells, local), axis=-1)
    print(
        f"h = 1/{n:<3d}  CG its {sol.report.iterations:3d}  p in [{sol.pressure.coeffs.min():.2g}, "
        f"{sol.pressure.coeffs.max():.2g}]  trace flux in {mb.flux_in:.5f}  consistent flux {cons.flux_in:.5f}  "
        f"energy {darcy_energy(sol):.5f}  max |b| {speed.max():.2f}"
    )

# Two things stand out.
#
# * The trace fluxes on the inflow and outflow segments agree to solver
#   precision, because the geometry is point symmetric. They approach the
#   energy int k |grad p|^2 slowly, while the consistent (residual) flux matches it
#   on every grid.
# * max |b| keeps growing like h^(-1/2): the velocity is singular where a
#   Dirichlet segment meets a wall. This singularity limits the convergence
#   rates of the transport solution later on.

x, y = np.meshgrid(np.linspace(0, 1, n + 1), np.linspace(0, 1, n + 1))
io.write_point_data(out / "pressure.vtk", mesh, sol.pressure(x.ravel(), y.ravel()), "pressure")
print("wrote", out / "pressure.vtk")
