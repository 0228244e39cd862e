"""Shared pieces of cell and facet assembly on structured grids."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, QuadRule, Space, cell_points, eval_basis, face_to_cell


def cell_quadrature(mesh: Mesh, space: Space, rule: QuadRule):
    """Everything needed to integrate over all cells with ``rule``.

    Returns a dict with per-point ``cells`` and ``local`` (ncells, nq[, 2]),
    ``weights`` (nq,) already scaled by the cell area, basis ``phi`` (nq, nloc)
    and physical gradients ``dphi`` (nq, nloc, 2).
    """
    cells, local, x = cell_points(mesh, rule.points)
    phi, dphi = eval_basis(space.order, rule.points)
    dphi = dphi / np.array([mesh.hx, mesh.hy])
    return {
        "cells": cells,
        "local": local,
        "x": x,
        "weights": rule.weights * (mesh.hx * mesh.hy),
        "phi": phi,
        "dphi": dphi,
    }


def facet_quadrature(mesh: Mesh, space: Space, facets, rule: QuadRule):
    """Per-facet basis values at the facet rule, weights scaled by facet length."""
    facets = np.asarray(facets, dtype=int)
    nf, nq = len(facets), len(rule)
    faces = mesh.facet_face[facets]
    local = np.zeros((nf, nq, 2))
    for face in range(4):
        local[faces == face] = face_to_cell(face, rule.points)
    phi, _ = eval_basis(space.order, local)
    cells = np.repeat(mesh.facet_cell[facets][:, None], nq, axis=1)
    weights = rule.weights[None, :] * mesh.facet_length(facets)[:, None]
    return {"cells": cells, "local": local, "phi": phi, "weights": weights}


def scatter_matrix(dofs_row: np.ndarray, dofs_col: np.ndarray, local: np.ndarray, n: int, m: int | None = None):
    """Sum local matrices ``local[e, a, b]`` into a global CSR matrix."""
    m = n if m is None else m
    na, nb = local.shape[1], local.shape[2]
    rows = np.repeat(dofs_row, nb, axis=1).ravel()
    cols = np.tile(dofs_col, (1, na)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, m)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def scatter_vector(dofs: np.ndarray, local: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    np.add.at(out, dofs.ravel(), local.ravel())
    return out
