"""Test-space-only ultraweak discretization of ``div(b u) + c u = f`` with ``u = g`` on the inflow.

Only the test space ``Y_h`` (continuous Lagrange) is discretized. The discrete
problem is the normal equation

    (A* w, A* v)_X = f(v)   for all v in Y_h,

with ``A* v = (-b . grad v + c v, v|_out)`` and the trial inner product
``(u, u')_X = (u, u')_{L2(Omega)} + (u, u')_{L2(out, |b.n|)}``. The right-hand
side is ``f(v) = (f0, v) + (g, v)_{L2(in, |b.n|)}``. The solution ``u`` is never
represented in a discrete trial basis; see :mod:`uwtransport.reconstruct`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import cell_quadrature, facet_quadrature, scatter_matrix, scatter_vector
from .coefficients import BoundaryData, ConstantField, ScalarField, VelocityField
from .linalg import KrylovReport, Precond, cg_solve
from .mesh import FeFunction, Label, Mesh, QuadRule, Space, eval_basis, face_to_cell, gauss_rule


def default_cell_points(space: Space, b: VelocityField, c: ScalarField | None = None) -> int:
    """Gauss points per axis making the Gram integrand exact for polynomial b, c."""
    deg = max(b.degree, 0 if c is None else c.degree)
    return space.order + 1 + deg


def default_facet_points(space: Space, b: VelocityField) -> int:
    return space.order + 2 + b.degree


@dataclass(frozen=True, eq=False)
class AdjointKernel:
    """Pointwise evaluation of the formal adjoint ``v -> -b . grad v + c v``."""

    mesh: Mesh
    b: VelocityField
    c: ScalarField

    def basis_volume(self, cells, local, order: int) -> np.ndarray:
        """``A* psi_a`` volume part for every local basis function, shape (..., nloc)."""
        phi, dphi = eval_basis(order, local)
        dphi = dphi / np.array([self.mesh.hx, self.mesh.hy])
        bv = self.b.at(self.mesh, cells, local)
        cv = self.c.at(self.mesh, cells, local)
        return -np.einsum("...d,...ad->...a", bv, dphi) + cv[..., None] * phi

    def volume(self, v: FeFunction, cells, local) -> np.ndarray:
        bv = self.b.at(self.mesh, cells, local)
        cv = self.c.at(self.mesh, cells, local)
        return -np.einsum("...d,...d->...", bv, v.gradient(cells, local)) + cv * v.evaluate(cells, local)

    def trace(self, v: FeFunction, facets, s) -> np.ndarray:
        """Outflow trace part ``v|_out`` at facet parameters ``s``."""
        facets = np.asarray(facets, dtype=int)
        s = np.atleast_1d(s)
        cells = np.repeat(self.mesh.facet_cell[facets][:, None], len(s), axis=1)
        local = np.stack([face_to_cell(f, s) for f in self.mesh.facet_face[facets]])
        return v.evaluate(cells, local)


def assemble_gram(
    mesh: Mesh,
    space: Space,
    b: VelocityField,
    c: ScalarField,
    quad: tuple[QuadRule, QuadRule] | None = None,
) -> sp.csr_matrix:
    """Gram matrix ``G_ij = (A* psi_i, A* psi_j)_X``.

    ``quad`` is a (cell rule, facet rule) pair; by default both are exact for
    polynomial coefficients. The result is symmetric bit for bit.
    """
    if not space.continuous:
        raise ValueError("the test space must be continuous")
    if hasattr(c, "check"):
        c.check(mesh)
    if quad is None:
        quad = (
            gauss_rule(default_cell_points(space, b, c)),
            gauss_rule(default_facet_points(space, b), "facet"),
        )
    cell_rule, facet_rule = quad
    kernel = AdjointKernel(mesh, b, c)
    data = cell_quadrature(mesh, space, cell_rule)
    Av = kernel.basis_volume(data["cells"], data["local"], space.order)
    local = np.einsum("cqa,q,cqb->cab", Av, data["weights"], Av)

    dofs = space.dof_map()
    out = mesh.facets(Label.OUT)
    fdata = facet_quadrature(mesh, space, out, facet_rule)
    bn = np.abs(b.normal_at(mesh, out, facet_rule.points))
    flocal = np.einsum("fqa,fq,fqb->fab", fdata["phi"], bn * fdata["weights"], fdata["phi"])
    local_all = np.concatenate([local, flocal])
    dofs_all = np.concatenate([dofs, dofs[mesh.facet_cell[out]]])
    # exact symmetry of each element contribution and of the sum
    local_all = 0.5 * (local_all + local_all.transpose(0, 2, 1))
    G = scatter_matrix(dofs_all, dofs_all, local_all, space.ndofs)
    G = (0.5 * (G + G.T)).tocsr()
    G.sort_indices()
    return G


def assemble_rhs(
    mesh: Mesh,
    space: Space,
    f0: ScalarField | None,
    g: BoundaryData | None,
    b: VelocityField,
    quad: tuple[QuadRule, QuadRule] | None = None,
) -> np.ndarray:
    """Load vector ``f_i = (f0, psi_i) + (g, psi_i)_{L2(in, |b.n|)}``."""
    if quad is None:
        deg = 0 if f0 is None else f0.degree
        quad = (
            gauss_rule(space.order + 1 + deg),
            gauss_rule(default_facet_points(space, b), "facet"),
        )
    cell_rule, facet_rule = quad
    dofs = space.dof_map()
    rhs = np.zeros(space.ndofs)
    if f0 is not None and not (isinstance(f0, ConstantField) and f0.value == 0.0):
        data = cell_quadrature(mesh, space, cell_rule)
        fv = f0.at(mesh, data["cells"], data["local"])
        rhs += scatter_vector(dofs, np.einsum("cq,q,qa->ca", fv, data["weights"], data["phi"]), space.ndofs)
    if g is not None:
        inflow = mesh.facets(Label.IN)
        if len(inflow):
            fdata = facet_quadrature(mesh, space, inflow, facet_rule)
            bn = np.abs(b.normal_at(mesh, inflow, facet_rule.points))
            gv = g.at(mesh, inflow, facet_rule.points)
            contrib = np.einsum("fq,fq,fqa->fa", gv * bn, fdata["weights"], fdata["phi"])
            rhs += scatter_vector(dofs[mesh.facet_cell[inflow]], contrib, space.ndofs)
    return rhs


@dataclass(eq=False)
class NormalEquationSystem:
    gram: sp.csr_matrix
    rhs: np.ndarray
    space: Space
    b: VelocityField
    c: ScalarField


def build_system(
    mesh: Mesh,
    order: int,
    b: VelocityField,
    c: ScalarField | None = None,
    f0: ScalarField | None = None,
    g: BoundaryData | None = None,
) -> NormalEquationSystem:
    c = ConstantField(0.0) if c is None else c
    space = Space(mesh, order, continuous=True)
    G = assemble_gram(mesh, space, b, c)
    rhs = assemble_rhs(mesh, space, f0, g, b)
    return NormalEquationSystem(G, rhs, space, b, c)


@dataclass(eq=False)
class UltraweakSolution:
    """Test-space solution ``w`` plus the data defining ``u = A* w``."""

    w: FeFunction
    b: VelocityField
    c: ScalarField
    report: KrylovReport

    @property
    def mesh(self) -> Mesh:
        return self.w.mesh

    @property
    def kernel(self) -> AdjointKernel:
        return AdjointKernel(self.mesh, self.b, self.c)


def solve_ultraweak(
    system: NormalEquationSystem,
    precond: Precond | str = Precond.SSOR,
    tol: float = 1e-10,
    maxit: int | None = None,
) -> UltraweakSolution:
    w, report = cg_solve(system.gram, system.rhs, precond=precond, tol=tol, maxit=maxit)
    return UltraweakSolution(FeFunction(system.space, w), system.b, system.c, report)


def check_orthogonality(system: NormalEquationSystem, sol: UltraweakSolution) -> float:
    """``max_i |f_i - (G w)_i| / ||f||``; zero for an exact discrete solution."""
    fnorm = np.linalg.norm(system.rhs)
    r = system.rhs - system.gram @ sol.w.coeffs
    if fnorm == 0.0:
        return float(np.abs(r).max(initial=0.0))
    return float(np.abs(r).max() / fnorm)
