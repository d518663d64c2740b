"""Stiffness matrices for P1 triangles and Q1 squares."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import MeshError
from ..linalg import SymOperator
from .mesh import TriMesh

__all__ = ["p1_element_matrices", "assemble_p1", "Q1_ELEMENT", "assemble_q1", "scatter"]

# Q1 stiffness of any square cell, corners counterclockwise from the lower left.
Q1_ELEMENT = np.array([
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
]) / 6.0


def p1_element_matrices(nodes, triangles) -> np.ndarray:
    """Element stiffness matrices, shape ``(m, 3, 3)``.

    For a triangle of area ``|K|`` with barycentric gradients ``g_a`` the
    entries are ``|K| g_a . g_b``.
    """
    P = np.asarray(nodes, dtype=float)[np.asarray(triangles)]
    # edge opposite to vertex a, rotated by 90 degrees, is 2|K| g_a
    E = np.stack([P[:, 2] - P[:, 1], P[:, 0] - P[:, 2], P[:, 1] - P[:, 0]], axis=1)
    area = 0.5 * (E[:, 2, 0] * -E[:, 1, 1] + E[:, 2, 1] * E[:, 1, 0])
    return np.einsum("mak,mbk->mab", E, E) / (4.0 * area)[:, None, None]


def scatter(elements, local, n) -> np.ndarray:
    """Sum element matrices into an ``n x n`` dense matrix, in element order."""
    elements = np.asarray(elements)
    k = elements.shape[1]
    rows = np.repeat(elements, k, axis=1).ravel()
    cols = np.tile(elements, (1, k)).ravel()
    M = sp.coo_matrix((np.asarray(local).ravel(), (rows, cols)), shape=(n, n))
    return M.toarray()


def assemble_p1(mesh: TriMesh, bc="dirichlet") -> SymOperator:
    """P1 stiffness matrix of ``mesh``.

    ``bc="dirichlet"`` keeps only the nodes in ``mesh.free_nodes`` (SPD);
    ``bc="neumann"`` keeps every node (kernel: the constants).
    """
    K = scatter(mesh.triangles, p1_element_matrices(mesh.nodes, mesh.triangles), mesh.n_nodes)
    if bc == "neumann":
        return SymOperator(K)
    if bc != "dirichlet":
        raise ValueError(f"unknown boundary condition {bc!r}")
    free = mesh.free_nodes
    if free.size == 0:
        raise MeshError("no free nodes: every node carries a Dirichlet condition")
    return SymOperator(K[np.ix_(free, free)])


def assemble_q1(grid, boundary="natural") -> SymOperator:
    """Q1 stiffness on the active nodes of ``grid``.

    ``boundary="natural"`` keeps every active node (kernel: the constants);
    ``"dirichlet"`` keeps only ``grid.dofs("dirichlet")``, the nodes not on
    the boundary of the union of the cells (SPD).
    """
    if len(grid.cells) == 0:
        raise MeshError("the grid has no cells")
    local = np.broadcast_to(Q1_ELEMENT, (len(grid.cells), 4, 4))
    K = scatter(grid.cell_nodes, local, grid.n_nodes)
    dofs = grid.dofs(boundary)
    if dofs.size == 0:
        raise MeshError("the grid has no interior nodes")
    return SymOperator(K[np.ix_(dofs, dofs)])
