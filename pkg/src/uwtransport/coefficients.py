"""Coefficient fields: permeability, reaction, source, inflow data and velocity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .mesh import FeFunction, Label, Mesh, check_aligned, face_to_cell

# reactive strip of the catalytic filter
REACTIVE_BOX = (0.0, 1.0, 0.4, 0.6)


class ScalarField:
    """Scalar coefficient evaluated at per-point (cell, local) pairs."""

    #: polynomial degree per axis inside a cell (used to pick quadrature)
    degree = 0

    def at(self, mesh: Mesh, cells, local) -> np.ndarray:
        cells = np.asarray(cells)
        local = np.asarray(local, dtype=float)
        x = mesh.cell_origin(cells) + local * np.array([mesh.hx, mesh.hy])
        return self.at_points(x[..., 0], x[..., 1])

    def at_points(self, x, y) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantField(ScalarField):
    value: float

    def at(self, mesh, cells, local):
        return np.full(np.shape(cells), float(self.value))

    def at_points(self, x, y):
        return np.full(np.broadcast(x, y).shape, float(self.value))


@dataclass(frozen=True)
class BoxIndicatorField(ScalarField):
    """``inside`` on the box ``[x0,x1] x [y0,y1]``, ``outside`` elsewhere.

    Cell evaluation uses the cell center, so the field is constant per cell.
    Pass ``mesh`` to reject grids whose lines miss the box edges.
    """

    box: tuple[float, float, float, float]
    inside: float
    outside: float = 0.0
    mesh: Mesh | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.mesh is not None:
            self.check(self.mesh)

    def check(self, mesh: Mesh) -> None:
        x0, x1, y0, y1 = self.box
        for v, name in ((x0, "x0"), (x1, "x1")):
            check_aligned(v, mesh.nx, f"box edge {name}=")
        for v, name in ((y0, "y0"), (y1, "y1")):
            check_aligned(v, mesh.ny, f"box edge {name}=")

    def at(self, mesh, cells, local):
        i, j = mesh.cell_ij(cells)
        return self.at_points((i + 0.5) * mesh.hx, (j + 0.5) * mesh.hy)

    def at_points(self, x, y):
        x0, x1, y0, y1 = self.box
        x, y = np.asarray(x), np.asarray(y)
        inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        return np.where(inside, float(self.inside), float(self.outside))


@dataclass(frozen=True)
class AnalyticField(ScalarField):
    func: Callable
    degree: int = 2

    def at_points(self, x, y):
        return np.broadcast_to(np.asarray(self.func(x, y), dtype=float), np.broadcast(x, y).shape)


def permeability(k_min: float = 0.1, box=REACTIVE_BOX, mesh: Mesh | None = None) -> BoxIndicatorField:
    return BoxIndicatorField(tuple(box), k_min, 1.0, mesh)


def reaction(c0: float = 0.5, box=REACTIVE_BOX, mesh: Mesh | None = None) -> BoxIndicatorField:
    return BoxIndicatorField(tuple(box), c0, 0.0, mesh)


def eval_scalar(field: ScalarField, mesh: Mesh, cell, local) -> np.ndarray:
    return field.at(mesh, cell, local)


def sin2_bump(z):
    return np.sin(3.0 * np.pi * np.asarray(z)) ** 2


@dataclass(frozen=True)
class BoundaryData:
    """Per-label boundary functions of the arclength parameter ``z``.

    ``z`` is the global y-coordinate on vertical sides and the x-coordinate
    on horizontal sides.
    """

    funcs: Mapping[Label, Callable]

    def at(self, mesh: Mesh, facets, s) -> np.ndarray:
        """Values at facet parameters ``s`` (shape (ns,)) on each facet, (nf, ns)."""
        facets = np.asarray(facets, dtype=int)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros((len(facets), len(s)))
        for k, f in enumerate(facets):
            label = Label(mesh.facet_label[f])
            if label not in self.funcs:
                raise ValueError(f"facet {f} has label {label.name}, no boundary data for it")
            cell, face = mesh.facet_cell[f], mesh.facet_face[f]
            x = mesh.cell_origin(cell) + face_to_cell(face, s) * np.array([mesh.hx, mesh.hy])
            z = x[:, 1] if face < 2 else x[:, 0]
            out[k] = self.funcs[label](z)
        return out


def inflow_data(g: Callable = sin2_bump) -> BoundaryData:
    return BoundaryData({Label.IN: g})


def constant_inflow(value: float = 1.0) -> BoundaryData:
    return BoundaryData({Label.IN: lambda z: np.full(np.shape(z), float(value))})


def eval_gD(data: BoundaryData, mesh: Mesh, facet: int, s) -> np.ndarray:
    """Inflow datum on an ``IN`` facet at facet parameters ``s``."""
    if mesh.facet_label[facet] != Label.IN:
        raise ValueError(f"facet {facet} is not an inflow facet")
    return data.at(mesh, [facet], s)[0]


class VelocityField:
    """Vector field ``b`` evaluated at per-point (cell, local) pairs."""

    degree = 0

    def at(self, mesh: Mesh, cells, local) -> np.ndarray:
        raise NotImplementedError

    def normal_at(self, mesh: Mesh, facets, s) -> np.ndarray:
        """One-sided ``b . nu`` on boundary facets, shape (nf, ns)."""
        facets = np.asarray(facets, dtype=int)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if len(facets) == 0:
            return np.zeros((0, len(s)))
        cells = np.repeat(mesh.facet_cell[facets][:, None], len(s), axis=1)
        local = np.stack([face_to_cell(f, s) for f in mesh.facet_face[facets]])
        b = self.at(mesh, cells, local)
        return np.einsum("fsd,fd->fs", b, mesh.facet_normal(facets))


@dataclass(frozen=True)
class AnalyticVelocity(VelocityField):
    """Closed-form velocity ``func(x, y) -> (bx, by)``; ``degree`` guides quadrature."""

    func: Callable
    degree: int = 0

    def at(self, mesh, cells, local):
        cells = np.asarray(cells)
        local = np.asarray(local, dtype=float)
        x = mesh.cell_origin(cells) + local * np.array([mesh.hx, mesh.hy])
        bx, by = self.func(x[..., 0], x[..., 1])
        shape = x.shape[:-1]
        return np.stack([np.broadcast_to(bx, shape), np.broadcast_to(by, shape)], axis=-1).astype(float)


def constant_velocity(bx: float, by: float) -> AnalyticVelocity:
    return AnalyticVelocity(lambda x, y: (np.full(np.shape(x), float(bx)), np.full(np.shape(y), float(by))))


@dataclass(frozen=True, eq=False)
class DarcyVelocity(VelocityField):
    """``b = -k grad p`` from a pressure finite element function."""

    pressure: FeFunction
    k: ScalarField

    @property
    def degree(self):
        return self.pressure.space.order

    def at(self, mesh, cells, local):
        pmesh = self.pressure.mesh
        if mesh is not pmesh:
            # evaluate on another grid: locate points in the pressure mesh
            x = mesh.cell_origin(np.asarray(cells)) + np.asarray(local) * np.array([mesh.hx, mesh.hy])
            cells, local = pmesh.locate(x[..., 0], x[..., 1])
        kv = self.k.at(pmesh, cells, local)
        return -kv[..., None] * self.pressure.gradient(cells, local)


def eval_velocity(field: VelocityField, mesh: Mesh, cell, local) -> np.ndarray:
    return field.at(mesh, cell, local)
