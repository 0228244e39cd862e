"""File output: legacy VTK (ASCII) and CSV.

Every VTK file carries exactly one scalar array. Floats are written with
``repr`` precision so that identical data gives byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh


def _fmt(values) -> list[str]:
    return [repr(float(v)) for v in np.ravel(values)]


def _lines(values, per_line: int = 6) -> str:
    vals = _fmt(values)
    return "\n".join(" ".join(vals[i : i + per_line]) for i in range(0, len(vals), per_line))


def _header(title: str, kind: str) -> list[str]:
    return ["# vtk DataFile Version 3.0", title[:255], "ASCII", f"DATASET {kind}"]


def _scalars(name: str, values) -> list[str]:
    return [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _lines(values)]


def write_structured_points(path, values: np.ndarray, name: str = "u", title: str = "voxel field") -> None:
    """Cell data on a uniform grid of the unit square; ``values[j, i]`` for voxel column i, row j."""
    values = np.asarray(values, dtype=float)
    my, mx = values.shape
    out = _header(title, "STRUCTURED_POINTS")
    out += [
        f"DIMENSIONS {mx + 1} {my + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {repr(1.0 / mx)} {repr(1.0 / my)} 1",
        f"CELL_DATA {mx * my}",
    ]
    out += _scalars(name, values.ravel())
    Path(path).write_text("\n".join(out) + "\n")


def _grid_lines(mesh: Mesh) -> list[str]:
    nx, ny = mesh.nx, mesh.ny
    x, y = np.meshgrid(np.linspace(0.0, 1.0, nx + 1), np.linspace(0.0, 1.0, ny + 1))
    pts = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    out = [f"POINTS {len(pts)} double", _lines(pts, 3)]
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v0 = (j * (nx + 1) + i).ravel()
    # VTK_QUAD vertex order is counter-clockwise
    quads = np.column_stack([v0, v0 + 1, v0 + nx + 2, v0 + nx + 1])
    out.append(f"CELLS {len(quads)} {5 * len(quads)}")
    out += [f"4 {a} {b} {c} {d}" for a, b, c, d in quads]
    out.append(f"CELL_TYPES {len(quads)}")
    out += ["9"] * len(quads)
    return out


def write_point_data(path, mesh: Mesh, values, name: str, title: str = "nodal field") -> None:
    """Vertex values (``(ny+1)*(nx+1)``, lexicographic by (y, x)) on the mesh as ``UNSTRUCTURED_GRID``."""
    values = np.ravel(np.asarray(values, dtype=float))
    if len(values) != (mesh.nx + 1) * (mesh.ny + 1):
        raise ValueError(f"expected {(mesh.nx + 1) * (mesh.ny + 1)} vertex values, got {len(values)}")
    out = _header(title, "UNSTRUCTURED_GRID") + _grid_lines(mesh)
    out.append(f"POINT_DATA {len(values)}")
    out += _scalars(name, values)
    Path(path).write_text("\n".join(out) + "\n")


def write_cell_data(path, mesh: Mesh, values, name: str, title: str = "cell field") -> None:
    """One value per cell on the mesh as ``UNSTRUCTURED_GRID``."""
    values = np.ravel(np.asarray(values, dtype=float))
    if len(values) != mesh.ncells:
        raise ValueError(f"expected {mesh.ncells} cell values, got {len(values)}")
    out = _header(title, "UNSTRUCTURED_GRID") + _grid_lines(mesh)
    out.append(f"CELL_DATA {len(values)}")
    out += _scalars(name, values)
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_scalars(path) -> tuple[str, np.ndarray]:
    """Read back the single scalar array of a file written here: (name, values)."""
    text = Path(path).read_text().split("\n")
    for k, line in enumerate(text):
        if line.startswith("SCALARS"):
            name = line.split()[1]
            vals = " ".join(text[k + 2 :]).split()
            return name, np.array([float(v) for v in vals])
    raise ValueError(f"no SCALARS section in {path}")


def write_voxel_csv(path, voxels) -> None:
    """Voxel field as rows ``x,y,value`` with voxel-center coordinates."""
    xc, yc = voxels.centers()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for x, y, v in zip(xc.ravel(), yc.ravel(), voxels.values.ravel()):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def write_rows(path, header: list[str], rows) -> None:
    """Plain CSV; floats written with ``repr`` precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_rows(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
