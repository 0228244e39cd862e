"""Evaluation of the reconstructed solution ``u = A* w`` without a trial space.

``u`` has a volume part ``-b . grad w + c w`` (an L2 function) and an outflow
trace part ``w|_out``; they are exposed separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import Label, face_to_cell, gauss_rule
from .ultraweak import UltraweakSolution, default_facet_points


def eval_u(sol: UltraweakSolution, cells, local) -> np.ndarray:
    """Volume part of ``u`` at per-point ``(cells, local)``."""
    return sol.kernel.volume(sol.w, cells, local)


def eval_u_points(sol: UltraweakSolution, x, y) -> np.ndarray:
    cells, local = sol.mesh.locate(x, y)
    return eval_u(sol, cells, local)


@dataclass
class VoxelField:
    """Cell averages of ``u`` on an ``mx`` x ``my`` voxel grid; ``values[j, i]``."""

    mx: int
    my: int
    values: np.ndarray

    def centers(self):
        xc = (np.arange(self.mx) + 0.5) / self.mx
        yc = (np.arange(self.my) + 0.5) / self.my
        return np.meshgrid(xc, yc)


def _sub_points(mesh, mx, my, q):
    """Per-voxel quadrature points mapped to (FE cell, local coordinate)."""
    rx, ry = mx // mesh.nx, my // mesh.ny
    rule = gauss_rule(q)
    vi, vj = np.meshgrid(np.arange(mx), np.arange(my))
    vi, vj = vi.ravel(), vj.ravel()
    cells = (vj // ry) * mesh.nx + vi // rx
    sub = np.stack([vi % rx, vj % ry], axis=-1).astype(float)
    local = (sub[:, None, :] + rule.points[None, :, :]) / np.array([rx, ry])
    cells = np.repeat(cells[:, None], len(rule), axis=1)
    return cells, local, rule.weights


def voxelize(sol: UltraweakSolution, mx: int, my: int, q: int = 2, chunk: int = 200_000) -> VoxelField:
    """Average the volume part of ``u`` over each voxel with a q x q Gauss rule."""
    mesh = sol.mesh
    if mx % mesh.nx or my % mesh.ny:
        raise ValueError(f"voxel grid {mx}x{my} does not refine the {mesh.nx}x{mesh.ny} mesh")
    cells, local, w = _sub_points(mesh, mx, my, q)
    vals = np.empty(len(cells))
    step = max(chunk // len(w), 1)
    for start in range(0, len(cells), step):
        sl = slice(start, start + step)
        vals[sl] = eval_u(sol, cells[sl], local[sl]) @ w
    return VoxelField(mx, my, vals.reshape(my, mx))


@dataclass
class TraceField:
    """Outflow trace ``w|_out`` at facet quadrature points with weights ``|b.n| ds``."""

    facets: np.ndarray
    points: np.ndarray
    values: np.ndarray
    flux_weights: np.ndarray
    x: np.ndarray


def outflow_trace(sol: UltraweakSolution, q: int | None = None) -> TraceField:
    mesh = sol.mesh
    q = default_facet_points(sol.w.space, sol.b) if q is None else q
    rule = gauss_rule(q, "facet")
    out = mesh.facets(Label.OUT)
    values = sol.kernel.trace(sol.w, out, rule.points)
    bn = np.abs(sol.b.normal_at(mesh, out, rule.points))
    weights = bn * rule.weights[None, :] * mesh.facet_length(out)[:, None]
    x = np.zeros(values.shape + (2,))
    for k, f in enumerate(out):
        x[k] = mesh.cell_origin(mesh.facet_cell[f]) + face_to_cell(mesh.facet_face[f], rule.points) * [mesh.hx, mesh.hy]
    return TraceField(out, rule.points, values, weights, x)


def qoi_outflow_flux(sol: UltraweakSolution, q: int | None = None) -> float:
    """``int_out u |b.n| ds`` from the trace part of ``u``."""
    tr = outflow_trace(sol, q)
    return float(np.sum(tr.values * tr.flux_weights))


def l2_error_volume(
    sol: UltraweakSolution,
    reference: Callable,
    n_grid: tuple[int, int] | None = None,
    q: int = 3,
    chunk: int = 200_000,
) -> float:
    """L2(Omega) distance between the volume part of ``u`` and ``reference(x, y)``.

    Integrates with a q x q Gauss rule on each cell of an ``n_grid`` grid that
    refines the solution mesh (default: the solution mesh itself).
    """
    mesh = sol.mesh
    mx, my = (mesh.nx, mesh.ny) if n_grid is None else n_grid
    if mx % mesh.nx or my % mesh.ny:
        raise ValueError(f"quadrature grid {mx}x{my} does not refine the {mesh.nx}x{mesh.ny} mesh")
    cells, local, w = _sub_points(mesh, mx, my, q)
    area = 1.0 / (mx * my)
    total = 0.0
    step = max(chunk // len(w), 1)
    h = np.array([mesh.hx, mesh.hy])
    for start in range(0, len(cells), step):
        sl = slice(start, start + step)
        u = eval_u(sol, cells[sl], local[sl])
        x = mesh.cell_origin(cells[sl]) + local[sl] * h
        ref = np.asarray(reference(x[..., 0], x[..., 1]), dtype=float)
        total += float(np.sum(((u - ref) ** 2) @ w)) * area
    return float(np.sqrt(total))


def trace_error(sol: UltraweakSolution, reference: Callable, q: int | None = None) -> float:
    """L2(out, |b.n|) distance between the trace part of ``u`` and ``reference(x, y)``."""
    tr = outflow_trace(sol, q)
    ref = reference(tr.x[..., 0], tr.x[..., 1])
    return float(np.sqrt(np.sum((tr.values - ref) ** 2 * tr.flux_weights)))


def x_error(sol: UltraweakSolution, reference: Callable, n_grid=None, q: int = 3) -> float:
    """Error in the trial norm: volume and outflow-trace parts combined."""
    return float(np.hypot(l2_error_volume(sol, reference, n_grid, q), trace_error(sol, reference)))


def inflow_loading(mesh, b, g, q: int = 6) -> float:
    """``int_in g |b.n| ds``, the mass entering through the inflow boundary."""
    rule = gauss_rule(q, "facet")
    inflow = mesh.facets(Label.IN)
    bn = np.abs(b.normal_at(mesh, inflow, rule.points))
    gv = g.at(mesh, inflow, rule.points)
    return float(np.sum(gv * bn * rule.weights[None, :] * mesh.facet_length(inflow)[:, None]))
