"""Darcy pressure problem ``-div(k grad p) = 0`` and the velocity ``b = -k grad p``.

Pressure is prescribed on the ``IN`` (p = 1) and ``OUT`` (p = 0) facets; the
walls carry the natural no-flux condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .assembly import cell_quadrature, scatter_matrix
from .coefficients import DarcyVelocity, ScalarField
from .linalg import KrylovReport, Precond, cg_solve
from .mesh import FeFunction, Label, Mesh, Space, gauss_rule

DEFAULT_DIRICHLET = {Label.IN: 1.0, Label.OUT: 0.0}


def dirichlet_values(space: Space, dirichlet: Mapping[Label, float]) -> dict[int, float]:
    values: dict[int, float] = {}
    for label, value in dirichlet.items():
        for dof in space.boundary_dofs(space.mesh.facets(label)):
            values[int(dof)] = float(value)
    return values


def assemble_darcy(mesh: Mesh, space: Space, k: ScalarField, dirichlet=None, q: int | None = None):
    """Stiffness matrix ``int k grad(phi_i) . grad(phi_j)`` with Dirichlet rows eliminated.

    Dirichlet rows and columns are replaced by identity rows/columns and the
    known values are lifted into the right-hand side, so the matrix stays
    symmetric. Pass ``dirichlet={}`` for the bare stiffness matrix.
    """
    dirichlet = DEFAULT_DIRICHLET if dirichlet is None else dirichlet
    if not space.continuous:
        raise ValueError("Darcy pressure needs a continuous space")
    if hasattr(k, "check"):
        k.check(mesh)
    q = space.order + 1 + k.degree if q is None else q
    data = cell_quadrature(mesh, space, gauss_rule(q))
    kv = k.at(mesh, data["cells"], data["local"])
    dphi = data["dphi"]
    local = np.einsum("cq,q,qad,qbd->cab", kv, data["weights"], dphi, dphi)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    dofs = space.dof_map()
    K = scatter_matrix(dofs, dofs, local, space.ndofs)
    rhs = np.zeros(space.ndofs)

    fixed = dirichlet_values(space, dirichlet)
    if fixed:
        idx = np.fromiter(fixed.keys(), dtype=np.int64)
        vals = np.fromiter(fixed.values(), dtype=float)
        g = np.zeros(space.ndofs)
        g[idx] = vals
        rhs -= K @ g
        keep = np.ones(space.ndofs)
        keep[idx] = 0.0
        K = K.multiply(keep[:, None]).multiply(keep[None, :]).tocsr()
        K = K + _diag(idx, space.ndofs)
        K.sort_indices()
        rhs[idx] = vals
    return K, rhs


def _diag(idx, n):
    import scipy.sparse as sp

    d = np.zeros(n)
    d[idx] = 1.0
    return sp.diags(d, format="csr")


@dataclass(eq=False)
class PressureSolution:
    pressure: FeFunction
    k: ScalarField
    report: KrylovReport
    dirichlet: Mapping[Label, float] = field(default_factory=lambda: dict(DEFAULT_DIRICHLET))

    @property
    def mesh(self) -> Mesh:
        return self.pressure.mesh

    @property
    def velocity(self) -> DarcyVelocity:
        return DarcyVelocity(self.pressure, self.k)

    def bounds_violation(self) -> float:
        """How far nodal pressures leave the range of the Dirichlet data."""
        lo, hi = min(self.dirichlet.values()), max(self.dirichlet.values())
        c = self.pressure.coeffs
        return float(max(lo - c.min(), c.max() - hi, 0.0))


def solve_pressure(
    mesh: Mesh,
    k: ScalarField,
    order: int = 2,
    precond: Precond | str = Precond.SSOR,
    tol: float = 1e-12,
    maxit: int | None = None,
    dirichlet=None,
) -> PressureSolution:
    dirichlet = DEFAULT_DIRICHLET if dirichlet is None else dirichlet
    space = Space(mesh, order, continuous=True)
    K, rhs = assemble_darcy(mesh, space, k, dirichlet)
    p, report = cg_solve(K, rhs, precond=precond, tol=tol, maxit=maxit)
    # identity rows decouple the Dirichlet dofs; store their values exactly
    for dof, value in dirichlet_values(space, dirichlet).items():
        p[dof] = value
    return PressureSolution(FeFunction(space, p), k, report, dict(dirichlet))


@dataclass
class MassBalance:
    flux_in: float
    flux_out: float
    imbalance: float


def boundary_flux(velocity, mesh: Mesh, label: Label, q: int = 4) -> float:
    """``int_{label} b . nu ds`` using one-sided traces."""
    facets = mesh.facets(label)
    rule = gauss_rule(q, "facet")
    bn = velocity.normal_at(mesh, facets, rule.points)
    w = rule.weights[None, :] * mesh.facet_length(facets)[:, None]
    return float(np.sum(bn * w))


def consistent_flux(sol: PressureSolution, label: Label) -> float:
    """``int_{label} k grad p . nu ds`` from the stiffness residual.

    Tests the bare stiffness form with the sum of the basis functions of the
    ``label`` dofs, which equals one on the segment. Unlike the one-sided
    trace of ``grad p`` this flux satisfies Green's identity to solver
    tolerance.
    """
    space = sol.pressure.space
    K, _ = assemble_darcy(sol.mesh, space, sol.k, dirichlet={})
    r = K @ sol.pressure.coeffs
    return float(r[space.boundary_dofs(sol.mesh.facets(label))].sum())


def mass_balance(sol: PressureSolution, q: int | None = None, method: str = "trace") -> MassBalance:
    """Inflow flux, outflow flux and relative imbalance.

    ``method="trace"`` integrates the one-sided velocity over the facets;
    ``method="consistent"`` uses :func:`consistent_flux`.
    """
    if method == "consistent":
        phi_in = consistent_flux(sol, Label.IN)
        phi_out = -consistent_flux(sol, Label.OUT)
    elif method == "trace":
        q = sol.pressure.space.order + 2 if q is None else q
        b = sol.velocity
        phi_in = -boundary_flux(b, sol.mesh, Label.IN, q)
        phi_out = boundary_flux(b, sol.mesh, Label.OUT, q)
    else:
        raise ValueError(f"unknown flux method {method!r}")
    imbalance = abs(phi_in - phi_out) / max(phi_in, phi_out)
    return MassBalance(phi_in, phi_out, imbalance)


def darcy_energy(sol: PressureSolution, q: int | None = None) -> float:
    """``int k |grad p|^2 dx``; equals the inflow flux for unit pressure drop."""
    space = sol.pressure.space
    q = space.order + 1 if q is None else q
    data = cell_quadrature(sol.mesh, space, gauss_rule(q))
    g = sol.pressure.gradient(data["cells"], data["local"])
    kv = sol.k.at(sol.mesh, data["cells"], data["local"])
    return float(np.einsum("cq,q,cqd,cqd->", kv, data["weights"], g, g))
