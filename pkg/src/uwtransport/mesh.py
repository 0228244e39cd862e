"""Structured quadrilateral meshes of the unit square and Lagrange spaces on them.

Cells are numbered lexicographically, ``cell = j * nx + i`` for the cell in
column ``i`` and row ``j``. The reference cell is ``[0, 1]^2`` and local
Lagrange nodes are numbered lexicographically by ``(y, x)``, i.e. for order 1
the nodes are ``(0,0), (1,0), (0,1), (1,1)``.

Local faces of a cell are ``0`` (x=0), ``1`` (x=1), ``2`` (y=0), ``3`` (y=1).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

ALIGN_TOL = 1e-9


class Label(enum.IntEnum):
    """Geometric boundary label of a facet."""

    WALL = 0
    IN = 1
    OUT = 2


class Domain(enum.Enum):
    CELL = "cell"
    FACET = "facet"


class AlignmentError(ValueError):
    """A geometric coordinate does not coincide with a grid line."""


# side name -> (local face id, outer normal)
SIDES = {
    "left": (0, (-1.0, 0.0)),
    "right": (1, (1.0, 0.0)),
    "bottom": (2, (0.0, -1.0)),
    "top": (3, (0.0, 1.0)),
}
FACE_NORMALS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])


@dataclass(frozen=True)
class Segment:
    """Straight piece of the boundary: ``side`` of the square, ``lo < t < hi``.

    ``t`` is the y-coordinate on the left/right sides and the x-coordinate on
    the bottom/top sides.
    """

    side: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ValueError(f"bad segment bounds ({self.lo}, {self.hi})")


Geometry = Mapping[Label, Sequence[Segment]]

FILTER_GEOMETRY: Geometry = {
    Label.IN: (Segment("left", 2.0 / 3.0, 1.0),),
    Label.OUT: (Segment("right", 0.0, 1.0 / 3.0),),
}
CHANNEL_GEOMETRY: Geometry = {
    Label.IN: (Segment("left", 0.0, 1.0),),
    Label.OUT: (Segment("right", 0.0, 1.0),),
}
NO_GEOMETRY: Geometry = {}


def check_aligned(coord: float, n: int, what: str = "coordinate") -> int:
    """Return the grid index of ``coord`` on a grid with ``n`` cells.

    Raises :class:`AlignmentError` if ``coord`` is not a grid line.
    """
    k = coord * n
    kr = round(k)
    if abs(k - kr) > ALIGN_TOL:
        raise AlignmentError(
            f"{what} {coord!r} is not aligned with a grid of {n} cells (h = 1/{n})"
        )
    return int(kr)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform ``nx`` x ``ny`` grid of the unit square.

    Boundary facets are stored as parallel arrays ``facet_cell``,
    ``facet_face`` and ``facet_label``; the facet id is the array index.
    """

    nx: int
    ny: int
    facet_cell: np.ndarray
    facet_face: np.ndarray
    facet_label: np.ndarray
    geometry: Geometry = field(default_factory=dict, repr=False)

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    @property
    def nfacets(self) -> int:
        return len(self.facet_cell)

    def cell_ij(self, cells):
        cells = np.asarray(cells)
        return cells % self.nx, cells // self.nx

    def cell_origin(self, cells) -> np.ndarray:
        i, j = self.cell_ij(cells)
        return np.stack([i * self.hx, j * self.hy], axis=-1)

    def cell_centers(self) -> np.ndarray:
        return self.cell_origin(np.arange(self.ncells)) + 0.5 * np.array([self.hx, self.hy])

    def facets(self, label: Label | None = None) -> np.ndarray:
        """Ids of boundary facets carrying ``label`` (all facets if None)."""
        if label is None:
            return np.arange(self.nfacets)
        return np.flatnonzero(self.facet_label == label)

    def facet_length(self, facets) -> np.ndarray:
        faces = self.facet_face[np.asarray(facets)]
        return np.where(faces < 2, self.hy, self.hx)

    def facet_normal(self, facets) -> np.ndarray:
        return FACE_NORMALS[self.facet_face[np.asarray(facets)]]

    def locate(self, x, y):
        """Cell ids and local coordinates of global points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        i = np.clip(np.floor(x * self.nx).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor(y * self.ny).astype(int), 0, self.ny - 1)
        local = np.stack([x * self.nx - i, y * self.ny - j], axis=-1)
        return j * self.nx + i, local


def build_mesh(nx: int, ny: int, geometry: Geometry | None = None) -> Mesh:
    """Build the grid and label its boundary facets.

    Facets that lie inside a segment of ``geometry[label]`` get that label,
    all other boundary facets are ``WALL``. Segment endpoints must sit on grid
    lines; misaligned endpoints raise :class:`AlignmentError`.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"need nx, ny >= 1, got ({nx}, {ny})")
    geometry = dict(geometry or {})

    cells, faces = [], []
    # bottom, top, left, right; facet position parameter t along the side
    for i in range(nx):
        cells.append(i)
        faces.append(2)
    for i in range(nx):
        cells.append((ny - 1) * nx + i)
        faces.append(3)
    for j in range(ny):
        cells.append(j * nx)
        faces.append(0)
    for j in range(ny):
        cells.append(j * nx + nx - 1)
        faces.append(1)
    cells = np.array(cells, dtype=np.int64)
    faces = np.array(faces, dtype=np.int64)
    labels = np.full(len(cells), Label.WALL, dtype=np.int64)
    # index of the facet along its side
    pos = np.where(faces < 2, cells // nx, cells % nx)

    for label, segments in geometry.items():
        for seg in segments:
            face = SIDES[seg.side][0]
            n = ny if face < 2 else nx
            axis = "y" if face < 2 else "x"
            lo = check_aligned(seg.lo, n, f"{seg.side} segment endpoint {axis}=")
            hi = check_aligned(seg.hi, n, f"{seg.side} segment endpoint {axis}=")
            hit = (faces == face) & (pos >= lo) & (pos < hi)
            clash = hit & (labels != Label.WALL) & (labels != label)
            if clash.any():
                raise ValueError(f"segment {seg} overlaps another labelled segment")
            labels[hit] = label

    return Mesh(nx, ny, cells, faces, labels, geometry)


@dataclass(frozen=True, eq=False)
class Space:
    """Lagrange space of ``order`` on ``mesh``, continuous or discontinuous."""

    mesh: Mesh
    order: int
    continuous: bool = True

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {self.order}")
        if self.order == 0 and self.continuous:
            raise ValueError("order 0 is only available as a discontinuous space")

    @property
    def nloc(self) -> int:
        return (self.order + 1) ** 2

    @property
    def ndofs(self) -> int:
        p, m = self.order, self.mesh
        if self.continuous:
            return (p * m.nx + 1) * (p * m.ny + 1)
        return m.ncells * self.nloc

    def dof_map(self) -> np.ndarray:
        return dof_map(self.mesh, self)

    def dof_coordinates(self) -> np.ndarray:
        """Global coordinates of the nodal points, indexed by dof."""
        m, p = self.mesh, self.order
        if self.continuous:
            gx = np.linspace(0.0, 1.0, p * m.nx + 1)
            gy = np.linspace(0.0, 1.0, p * m.ny + 1)
            X, Y = np.meshgrid(gx, gy)
            return np.stack([X.ravel(), Y.ravel()], axis=-1)
        nodes = lagrange_nodes(p)
        pts = m.cell_origin(np.arange(m.ncells))[:, None, :] + nodes[None] * [m.hx, m.hy]
        return pts.reshape(-1, 2)

    def boundary_dofs(self, facets) -> np.ndarray:
        """Dofs whose nodes lie on the closure of the given boundary facets."""
        local = face_local_dofs(self.order)
        dmap = self.dof_map()
        m = self.mesh
        facets = np.asarray(facets, dtype=int)
        out = [dmap[m.facet_cell[f], local[m.facet_face[f]]] for f in facets]
        if not out:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(out))


def lagrange_nodes(order: int) -> np.ndarray:
    """Reference-cell nodes in lexicographic (y, x) order, shape (nloc, 2)."""
    if order == 0:
        return np.array([[0.5, 0.5]])
    t = np.linspace(0.0, 1.0, order + 1)
    X, Y = np.meshgrid(t, t)
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def face_local_dofs(order: int) -> list[np.ndarray]:
    """Local dof indices lying on each of the four faces."""
    nodes = lagrange_nodes(order)
    if order == 0:
        return [np.array([0])] * 4
    return [
        np.flatnonzero(nodes[:, 0] == 0.0),
        np.flatnonzero(nodes[:, 0] == 1.0),
        np.flatnonzero(nodes[:, 1] == 0.0),
        np.flatnonzero(nodes[:, 1] == 1.0),
    ]


def _lagrange_1d(order: int, t: np.ndarray):
    """Values and derivatives of 1D Lagrange polynomials on equispaced nodes."""
    if order == 0:
        return np.ones(t.shape + (1,)), np.zeros(t.shape + (1,))
    nodes = np.linspace(0.0, 1.0, order + 1)
    val = np.ones(t.shape + (order + 1,))
    der = np.zeros(t.shape + (order + 1,))
    for k in range(order + 1):
        others = [m for m in range(order + 1) if m != k]
        denom = np.prod([nodes[k] - nodes[m] for m in others])
        val[..., k] = np.prod([t - nodes[m] for m in others], axis=0) / denom
        acc = np.zeros_like(t)
        for skip in others:
            acc = acc + np.prod(
                [t - nodes[m] for m in others if m != skip] or [np.ones_like(t)], axis=0
            )
        der[..., k] = acc / denom
    return val, der


def eval_basis(order: int, local) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Lagrange basis at reference points.

    Parameters
    ----------
    order : int
        Polynomial order per axis (0, 1 or 2).
    local : array_like, shape (..., 2)
        Points in the reference cell.

    Returns
    -------
    values : ndarray, shape (..., nloc)
    grads : ndarray, shape (..., nloc, 2)
        Gradients with respect to the reference coordinates.
    """
    local = np.asarray(local, dtype=float)
    vx, dx = _lagrange_1d(order, local[..., 0])
    vy, dy = _lagrange_1d(order, local[..., 1])
    n1 = order + 1
    shape = local.shape[:-1] + (n1 * n1,)
    values = (vy[..., :, None] * vx[..., None, :]).reshape(shape)
    gx = (vy[..., :, None] * dx[..., None, :]).reshape(shape)
    gy = (dy[..., :, None] * vx[..., None, :]).reshape(shape)
    return values, np.stack([gx, gy], axis=-1)


def map_to_physical(mesh: Mesh, cell: int, local):
    """Affine map of the reference cell onto ``cell``: (global point, jacobian, det)."""
    local = np.asarray(local, dtype=float)
    h = np.array([mesh.hx, mesh.hy])
    x = mesh.cell_origin(cell) + local * h
    return x, np.diag(h), mesh.hx * mesh.hy


def face_to_cell(face: int, s) -> np.ndarray:
    """Reference-cell coordinates of facet parameter ``s`` on local ``face``."""
    s = np.asarray(s, dtype=float)
    zero, one = np.zeros_like(s), np.ones_like(s)
    return np.stack(
        [
            (zero, s),
            (one, s),
            (s, zero),
            (s, one),
        ][face],
        axis=-1,
    )


@dataclass(frozen=True)
class QuadRule:
    """Gauss rule on the reference cell or facet; weights sum to 1."""

    points: np.ndarray
    weights: np.ndarray
    domain: Domain = Domain.CELL

    def __len__(self):
        return len(self.weights)


def gauss_rule(q: int, domain: Domain | str = Domain.CELL) -> QuadRule:
    """Tensor Gauss-Legendre rule with ``q`` points per axis on ``[0,1]^d``."""
    domain = Domain(domain)
    if not 1 <= q <= 10:
        raise ValueError(f"q must be in 1..10, got {q}")
    t, w = np.polynomial.legendre.leggauss(q)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    if domain is Domain.FACET:
        return QuadRule(t, w, domain)
    X, Y = np.meshgrid(t, t)
    W = np.outer(w, w)
    return QuadRule(np.stack([X.ravel(), Y.ravel()], axis=-1), W.ravel(), domain)


def composite_rule(q: int, r: int) -> QuadRule:
    """``q`` x ``q`` Gauss rule on each of ``r`` x ``r`` equal sub-squares of the reference cell."""
    base = gauss_rule(q)
    k = np.stack(np.meshgrid(np.arange(r), np.arange(r)), axis=-1).reshape(-1, 2)
    pts = (k[:, None, :] + base.points[None, :, :]) / r
    w = np.broadcast_to(base.weights / (r * r), (len(k), len(base))).ravel()
    return QuadRule(pts.reshape(-1, 2), np.ascontiguousarray(w), Domain.CELL)


def dof_map(mesh: Mesh, space: Space) -> np.ndarray:
    """Global dof index of every (cell, local dof), shape (ncells, nloc)."""
    p = space.order
    cells = np.arange(mesh.ncells)
    if not space.continuous:
        return cells[:, None] * space.nloc + np.arange(space.nloc)[None, :]
    i, j = mesh.cell_ij(cells)
    lx = np.tile(np.arange(p + 1), p + 1)
    ly = np.repeat(np.arange(p + 1), p + 1)
    gx = p * i[:, None] + lx[None, :]
    gy = p * j[:, None] + ly[None, :]
    return gy * (p * mesh.nx + 1) + gx


@dataclass(eq=False)
class FeFunction:
    """Coefficient vector on a :class:`Space`."""

    space: Space
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError(
                f"expected {self.space.ndofs} coefficients, got {self.coeffs.shape}"
            )

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def _local(self, cells):
        return self.coeffs[self.space.dof_map()[np.asarray(cells)]]

    def evaluate(self, cells, local) -> np.ndarray:
        """Values at per-point ``(cells[k], local[k])``."""
        phi, _ = eval_basis(self.space.order, local)
        return np.einsum("...a,...a->...", phi, self._local(cells))

    def gradient(self, cells, local) -> np.ndarray:
        """Physical gradients at per-point ``(cells[k], local[k])``, shape (..., 2)."""
        _, dphi = eval_basis(self.space.order, local)
        g = np.einsum("...ad,...a->...d", dphi, self._local(cells))
        return g / np.array([self.mesh.hx, self.mesh.hy])

    def __call__(self, x, y) -> np.ndarray:
        cells, local = self.mesh.locate(x, y)
        return self.evaluate(cells, local)


def interpolate(space: Space, func) -> FeFunction:
    """Nodal interpolation of ``func(x, y)`` into ``space``."""
    xy = space.dof_coordinates()
    values = np.broadcast_to(np.asarray(func(xy[:, 0], xy[:, 1]), dtype=float), (len(xy),))
    return FeFunction(space, values.copy())


def cell_points(mesh: Mesh, local: np.ndarray):
    """Broadcast reference points to every cell.

    Returns per-point arrays ``cells`` (ncells, npts), ``local`` (ncells, npts, 2)
    and global coordinates ``x`` (ncells, npts, 2).
    """
    local = np.atleast_2d(local)
    n = mesh.ncells
    cells = np.repeat(np.arange(n)[:, None], len(local), axis=1)
    loc = np.broadcast_to(local, (n,) + local.shape)
    x = mesh.cell_origin(np.arange(n))[:, None, :] + loc * np.array([mesh.hx, mesh.hy])
    return cells, loc, x


def facet_points(mesh: Mesh, facets, s: np.ndarray):
    """Reference-cell points of facet parameters ``s`` on the given facets.

    Returns ``cells`` (nf, ns), ``local`` (nf, ns, 2) and global ``x`` (nf, ns, 2).
    """
    facets = np.asarray(facets, dtype=int)
    s = np.atleast_1d(s)
    cells = np.repeat(mesh.facet_cell[facets][:, None], len(s), axis=1)
    local = np.stack([face_to_cell(f, s) for f in mesh.facet_face[facets]]) if len(facets) else np.zeros((0, len(s), 2))
    x = mesh.cell_origin(cells) + local * np.array([mesh.hx, mesh.hy])
    return cells, local, x
