"""Upwind discontinuous Galerkin solver for ``div(b u) + c u = f``, ``u = g`` on the inflow.

Used as the comparison solution for convergence studies and as an
independent oracle. On each cell ``K``

    -(u, b . grad v)_K + (c u, v)_K + sum_F (b.n u_up, v)_F = (f, v)_K

with the upwind value ``u_up`` on interior facets (normal velocity averaged
over both sides, so the flux is single valued), ``g`` on inflow facets and the
interior trace on outflow facets. Wall facets carry no flux.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import cell_quadrature, facet_quadrature, scatter_matrix, scatter_vector
from .coefficients import BoundaryData, ConstantField, DarcyVelocity, ScalarField, VelocityField
from .linalg import DENSE_LIMIT, KrylovReport, Precond, bicgstab_solve, dense_solve
from .mesh import FeFunction, Label, Mesh, Space, eval_basis, face_to_cell, gauss_rule


def _interior_pairs(mesh: Mesh, vertical: bool):
    """(minus cell, plus cell) pairs across interior facets; normal points minus -> plus."""
    i, j = np.meshgrid(np.arange(mesh.nx), np.arange(mesh.ny))
    if vertical:
        sel = i < mesh.nx - 1
        minus = (j * mesh.nx + i)[sel]
        return minus, minus + 1
    sel = j < mesh.ny - 1
    minus = (j * mesh.nx + i)[sel]
    return minus, minus + mesh.nx


def assemble_dg(
    mesh: Mesh,
    b: VelocityField,
    c: ScalarField | None = None,
    f0: ScalarField | None = None,
    g: BoundaryData | None = None,
    order: int = 1,
    q: int | None = None,
):
    """Non-symmetric DG system ``(A, rhs)`` on the discontinuous order-``order`` space."""
    c = ConstantField(0.0) if c is None else c
    if hasattr(c, "check"):
        c.check(mesh)
    space = Space(mesh, order, continuous=False)
    q = order + 1 + max(b.degree, c.degree) if q is None else q
    n = space.ndofs
    dofs = space.dof_map()

    data = cell_quadrature(mesh, space, gauss_rule(q))
    bv = b.at(mesh, data["cells"], data["local"])
    cv = c.at(mesh, data["cells"], data["local"])
    phi, dphi = data["phi"], data["dphi"]
    bgrad = np.einsum("cqd,qad->cqa", bv, dphi)
    local = -np.einsum("cqa,q,qb->cab", bgrad, data["weights"], phi)
    local += np.einsum("cq,q,qa,qb->cab", cv, data["weights"], phi, phi)
    blocks = [(dofs, dofs, local)]

    frule = gauss_rule(q, "facet")
    for vertical in (True, False):
        minus, plus = _interior_pairs(mesh, vertical)
        if len(minus) == 0:
            continue
        fm, fp = (1, 0) if vertical else (3, 2)
        lm = np.broadcast_to(face_to_cell(fm, frule.points), (len(minus), len(frule), 2))
        lp = np.broadcast_to(face_to_cell(fp, frule.points), (len(plus), len(frule), 2))
        nu = np.array([1.0, 0.0]) if vertical else np.array([0.0, 1.0])
        cm = np.repeat(minus[:, None], len(frule), axis=1)
        cp = np.repeat(plus[:, None], len(frule), axis=1)
        bn = 0.5 * (b.at(mesh, cm, lm) @ nu + b.at(mesh, cp, lp) @ nu)
        w = frule.weights * (mesh.hy if vertical else mesh.hx)
        phm, _ = eval_basis(order, lm[0])
        php, _ = eval_basis(order, lp[0])
        pos, neg = np.maximum(bn, 0.0) * w, np.minimum(bn, 0.0) * w
        blocks += [
            (dofs[minus], dofs[minus], np.einsum("fq,qa,qb->fab", pos, phm, phm)),
            (dofs[minus], dofs[plus], np.einsum("fq,qa,qb->fab", neg, phm, php)),
            (dofs[plus], dofs[minus], -np.einsum("fq,qa,qb->fab", pos, php, phm)),
            (dofs[plus], dofs[plus], -np.einsum("fq,qa,qb->fab", neg, php, php)),
        ]

    out = mesh.facets(Label.OUT)
    if len(out):
        fd = facet_quadrature(mesh, space, out, frule)
        bn = np.abs(b.normal_at(mesh, out, frule.points))
        od = dofs[mesh.facet_cell[out]]
        blocks.append((od, od, np.einsum("fq,fqa,fqb->fab", bn * fd["weights"], fd["phi"], fd["phi"])))

    A = sum(scatter_matrix(r, cl, v, n) for r, cl, v in blocks)
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()

    rhs = np.zeros(n)
    if f0 is not None:
        fv = f0.at(mesh, data["cells"], data["local"])
        rhs += scatter_vector(dofs, np.einsum("cq,q,qa->ca", fv, data["weights"], phi), n)
    inflow = mesh.facets(Label.IN)
    if g is not None and len(inflow):
        fd = facet_quadrature(mesh, space, inflow, frule)
        bn = np.abs(b.normal_at(mesh, inflow, frule.points))
        gv = g.at(mesh, inflow, frule.points)
        rhs += scatter_vector(
            dofs[mesh.facet_cell[inflow]], np.einsum("fq,fq,fqa->fa", gv * bn, fd["weights"], fd["phi"]), n
        )
    return A, rhs


def downstream_order(mesh: Mesh, b: VelocityField) -> np.ndarray:
    """Cell permutation that roughly follows the flow.

    For Darcy velocities cells are sorted by decreasing cell-center pressure;
    otherwise by the coordinate along the mean velocity direction. Gauss-Seidel
    sweeps in this order nearly invert an upwind system.
    """
    centers = np.full((mesh.ncells, 2), 0.5)
    cells = np.arange(mesh.ncells)
    if isinstance(b, DarcyVelocity):
        key = -b.pressure.evaluate(cells, centers)
    else:
        bc = b.at(mesh, cells, centers)
        xc = mesh.cell_centers()
        key = np.einsum("cd,d->c", xc, bc.mean(axis=0))
    return np.argsort(key, kind="stable")


@dataclass(eq=False)
class DgSolution:
    u: FeFunction
    b: VelocityField
    report: KrylovReport

    @property
    def mesh(self) -> Mesh:
        return self.u.mesh

    def __call__(self, x, y):
        return self.u(x, y)

    def cell_means(self) -> np.ndarray:
        rule = gauss_rule(self.u.space.order + 1)
        cells = np.repeat(np.arange(self.mesh.ncells)[:, None], len(rule), axis=1)
        local = np.broadcast_to(rule.points, cells.shape + (2,))
        return self.u.evaluate(cells, local) @ rule.weights


def solve_dg(
    mesh: Mesh,
    b: VelocityField,
    c: ScalarField | None = None,
    f0: ScalarField | None = None,
    g: BoundaryData | None = None,
    order: int = 1,
    precond: Precond | str = Precond.BLOCK_SSOR,
    tol: float = 1e-12,
    maxit: int | None = None,
    dense: bool | None = None,
) -> DgSolution:
    """Assemble and solve; tiny systems use dense LU unless ``dense=False``."""
    A, rhs = assemble_dg(mesh, b, c, f0, g, order)
    space = Space(mesh, order, continuous=False)
    n = A.shape[0]
    if dense is None:
        dense = n <= 500
    if dense and n <= DENSE_LIMIT:
        u, report = dense_solve(A, rhs)
    else:
        nloc = space.nloc
        perm = (downstream_order(mesh, b)[:, None] * nloc + np.arange(nloc)).ravel()
        Ap = A[perm][:, perm]
        up, report = bicgstab_solve(Ap, rhs[perm], precond=precond, tol=tol, maxit=maxit, block=nloc)
        u = np.empty(n)
        u[perm] = up
    return DgSolution(FeFunction(space, u), b, report)


def dg_outflow_flux(sol: DgSolution, q: int | None = None) -> float:
    """``int_out u |b.n| ds`` using the interior trace."""
    mesh = sol.mesh
    q = sol.u.space.order + 2 + sol.b.degree if q is None else q
    rule = gauss_rule(q, "facet")
    out = mesh.facets(Label.OUT)
    fd = facet_quadrature(mesh, sol.u.space, out, rule)
    bn = np.abs(sol.b.normal_at(mesh, out, rule.points))
    uv = sol.u.evaluate(fd["cells"], fd["local"])
    return float(np.sum(uv * bn * fd["weights"]))
