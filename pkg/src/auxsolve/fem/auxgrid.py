"""Auxiliary structured-grid preconditioner for P1 stiffness matrices.

The unstructured problem is preconditioned by a pointwise smoother plus a
correction computed on the squares of a uniform grid that lie inside the
domain, connected through nodal interpolation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import shapely

from ..auxspace import AuxSystem
from ..errors import MeshError, NotSPDError
from ..linalg import EPS, LinearMap, SymOperator, as_sym, preconditioned_extremes
from .assembly import assemble_p1, assemble_q1
from .mesh import TriMesh

__all__ = [
    "QuadGrid",
    "build_quad_grid",
    "nodal_interpolation",
    "p1_interpolation",
    "AuxGridPreconditioner",
    "auxgrid_preconditioner",
    "grid_pseudo_inverse",
    "interpolation_stability",
    "splitting_energies",
    "kappa_study",
    "write_study",
]

# corner offsets of a cell, counterclockwise from the lower left
_CORNERS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])


class QuadGrid:
    """Cells ``(i, j)`` of a uniform grid, ``[ox + i h0, ox + (i+1) h0] x ...``.

    Attributes
    ----------
    cells : ndarray, shape (k, 2)
    nodes : ndarray, shape (n, 2)
        Integer coordinates of the active nodes (corners of retained cells).
    cell_nodes : ndarray, shape (k, 4)
        Active-node indices of each cell, counterclockwise.
    """

    def __init__(self, origin, h0, cells):
        self.origin = np.asarray(origin, dtype=float)
        self.h0 = float(h0)
        if self.h0 <= 0:
            raise MeshError("h0 must be positive")
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        self.cells = cells[np.lexsort((cells[:, 0], cells[:, 1]))]
        corners = (self.cells[:, None, :] + _CORNERS[None]).reshape(-1, 2)
        if len(corners):
            nodes, inv = np.unique(corners[:, ::-1], axis=0, return_inverse=True)
            self.nodes = nodes[:, ::-1]
            self.cell_nodes = inv.reshape(-1, 4)
        else:
            self.nodes = np.zeros((0, 2), dtype=np.int64)
            self.cell_nodes = np.zeros((0, 4), dtype=np.int64)
        self._cell_index = {tuple(c): k for k, c in enumerate(self.cells.tolist())}

    def __repr__(self):
        return f"QuadGrid(h0={self.h0:.4g}, cells={len(self.cells)}, nodes={self.n_nodes})"

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def node_coords(self) -> np.ndarray:
        return self.origin + self.h0 * self.nodes

    def cell_of(self, i, j):
        return self._cell_index.get((int(i), int(j)))

    @property
    def interior_mask(self) -> np.ndarray:
        """Nodes whose four surrounding cells are all retained."""
        mask = np.ones(self.n_nodes, dtype=bool)
        for di, dj in _CORNERS:
            mask &= [(i - di, j - dj) in self._cell_index for i, j in self.nodes.tolist()]
        return mask

    def dofs(self, boundary="natural") -> np.ndarray:
        """Active nodes carrying unknowns under the given grid boundary condition."""
        if boundary == "natural":
            return np.arange(self.n_nodes)
        if boundary == "dirichlet":
            return np.flatnonzero(self.interior_mask)
        raise ValueError(f"unknown grid boundary condition {boundary!r}")


def _domain(mesh: TriMesh):
    polys = shapely.polygons(mesh.nodes[mesh.triangles])
    return shapely.union_all(polys)


def build_quad_grid(mesh: TriMesh, h0, origin=None, band=1e-12) -> QuadGrid:
    """Keep the grid squares that lie inside the meshed domain.

    Squares closer than ``band`` times the domain diameter to the boundary
    count as outside.  The origin defaults to the lower-left corner of the
    bounding box.
    """
    domain = _domain(mesh)
    x0, y0, x1, y1 = domain.bounds
    diam = np.hypot(x1 - x0, y1 - y0)
    if origin is None:
        origin = (x0, y0)
    ox, oy = origin
    i = np.arange(np.floor((x0 - ox) / h0), np.ceil((x1 - ox) / h0))
    j = np.arange(np.floor((y0 - oy) / h0), np.ceil((y1 - oy) / h0))
    I, J = (a.ravel() for a in np.meshgrid(i, j))
    boxes = shapely.box(ox + I * h0, oy + J * h0, ox + (I + 1) * h0, oy + (J + 1) * h0)
    inner = domain.buffer(-band * diam)
    shapely.prepare(inner)
    keep = shapely.contains(inner, boxes)
    return QuadGrid((ox, oy), h0, np.column_stack([I[keep], J[keep]]))


def nodal_interpolation(grid: QuadGrid, points, boundary="natural") -> LinearMap:
    """Evaluate the Q1 basis of ``grid`` at ``points``.

    Returns the map ``Pi_h`` from the grid unknowns ``grid.dofs(boundary)``
    to values at ``points``.  Points outside every retained cell get a zero
    row.
    """
    points = np.asarray(points, dtype=float)
    P = np.zeros((len(points), grid.n_nodes))
    if grid.n_nodes == 0:
        return LinearMap(P)
    local = (points - grid.origin) / grid.h0
    tol = 1e-12
    for p, (s, t) in enumerate(local):
        fi, fj = np.floor(s), np.floor(t)
        for di, dj in ((0, 0), (-1, 0), (0, -1), (-1, -1)):
            k = grid.cell_of(fi + di, fj + dj)
            if k is None:
                continue
            a, b = s - (fi + di), t - (fj + dj)
            if -tol <= a <= 1 + tol and -tol <= b <= 1 + tol:
                a, b = min(max(a, 0.0), 1.0), min(max(b, 0.0), 1.0)
                w = ((1 - a) * (1 - b), a * (1 - b), a * b, (1 - a) * b)
                P[p, grid.cell_nodes[k]] = w
                break
    return LinearMap(P[:, grid.dofs(boundary)])


def p1_interpolation(mesh: TriMesh, points) -> LinearMap:
    """Evaluate the P1 basis of the free nodes of ``mesh`` at ``points``.

    This is nodal interpolation from the finite element space onto the grid
    nodes (``Pi_0`` when ``points`` are grid dofs).  Points outside the mesh
    get a zero row.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    P = np.zeros((len(points), mesh.n_nodes))
    tris = mesh.triangles
    tree = shapely.STRtree(shapely.polygons(mesh.nodes[tris]))
    hits = tree.query(shapely.points(points), predicate="intersects")
    done = np.zeros(len(points), dtype=bool)
    for p, t in zip(*hits):
        if done[p]:
            continue
        x = mesh.nodes[tris[t]]
        T = np.column_stack([x[1] - x[0], x[2] - x[0]])
        l12 = np.linalg.solve(T, points[p] - x[0])
        lam = np.clip(np.array([1.0 - l12.sum(), *l12]), 0.0, 1.0)
        P[p, tris[t]] = lam / lam.sum()
        done[p] = True
    return LinearMap(P[:, mesh.free_nodes])


def grid_pseudo_inverse(A0) -> np.ndarray:
    """``A0^+`` for a grid stiffness matrix.

    An SPD ``A0`` is inverted through its Cholesky factor.  When the kernel
    is exactly the constants, ``A0 + e e^t`` with ``e = 1 / sqrt(n)`` is SPD
    and ``A0^+ = (A0 + e e^t)^{-1} - e e^t``.  Otherwise the spectral
    pseudo-inverse is used.
    """
    A0 = as_sym(A0, "A0")
    M = A0.entries
    n = A0.dim
    inv = _cholesky_inverse(M)
    if inv is not None:
        return inv
    E = np.full((n, n), 1.0 / n)
    leak = np.abs(M.sum(axis=1)).max()
    inv = _cholesky_inverse(M + E) if leak <= 1e3 * A0.tau_null else None
    if inv is None:
        return A0.pseudo_inverse()
    return inv - E


def _cholesky_inverse(M):
    n = M.shape[0]
    c, info = sla.lapack.dpotrf(M, lower=1)
    if info != 0:
        return None
    d = np.diag(c) ** 2
    if d.min() <= 1e3 * n * EPS * d.max():
        return None
    inv, info = sla.lapack.dpotri(c, lower=1)
    return np.tril(inv) + np.tril(inv, -1).T


@dataclass
class AuxGridPreconditioner:
    """``B = D^{-1} + Pi_h B0 Pi_h^t`` and its auxiliary-space view."""

    A: SymOperator
    D_inv: np.ndarray
    Pi_h: np.ndarray
    B0: np.ndarray
    B: np.ndarray

    def aux_view(self) -> AuxSystem:
        """``Vt = V x V0``, ``Pi = [I, Pi_h]``, ``Bt = diag(D^{-1}, B0)``."""
        n = self.A.dim
        Pi = np.hstack([np.eye(n), self.Pi_h])
        return AuxSystem(self.A, Pi, sla.block_diag(self.D_inv, self.B0))


def auxgrid_preconditioner(A, Pi_h=None, A0=None, B0=None) -> AuxGridPreconditioner:
    """Additive smoother plus auxiliary grid correction.

    ``B0`` defaults to the pseudo-inverse of ``A0``.  Without a grid
    (``Pi_h`` is ``None`` or has no columns) this is Jacobi.
    """
    A = as_sym(A, "A")
    d = np.diag(A.entries)
    if np.any(d == 0.0):
        raise NotSPDError("A has a zero diagonal entry")
    D_inv = np.diag(1.0 / d)
    n = A.dim
    if Pi_h is None:
        Pi_h = np.zeros((n, 0))
    Pi_h = np.asarray(Pi_h.entries if isinstance(Pi_h, LinearMap) else Pi_h, dtype=float)
    if B0 is None:
        B0 = grid_pseudo_inverse(A0) if Pi_h.shape[1] else np.zeros((0, 0))
    B0 = np.asarray(B0.entries if isinstance(B0, SymOperator) else B0, dtype=float)
    B = D_inv + Pi_h @ B0 @ Pi_h.T
    return AuxGridPreconditioner(A, D_inv, Pi_h, B0, 0.5 * (B + B.T))


def kappa(A, B) -> float:
    lo, hi = preconditioned_extremes(A, B)
    return hi / lo


def interpolation_stability(A, Pi_h, A0, samples=50, seed=0) -> float:
    """Largest sampled ratio ``|Pi_h v0|_A / |v0|_{A0 + M}``.

    ``M`` is the lumped grid mass matrix scaled by ``h0^{-2}``, i.e. a
    quarter of the number of cells at each node, so the ratio does not
    involve the grid size.
    """
    A = as_sym(A, "A").entries
    P = np.asarray(Pi_h.entries if isinstance(Pi_h, LinearMap) else Pi_h, dtype=float)
    A0 = as_sym(A0, "A0").entries
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((A0.shape[0], samples))
    num = np.einsum("ij,ij->j", P @ V, A @ (P @ V))
    mass = np.diag(A0) * 6.0 / 16.0
    den = np.einsum("ij,ij->j", V, A0 @ V) + np.einsum("i,ij->j", mass, V**2)
    return float(np.sqrt(np.max(num / den)))


def splitting_energies(pre: AuxGridPreconditioner, Pi_0, V):
    """Energies of the interpolation splitting ``v = (v - Pi_h v0) + Pi_h v0``.

    With ``v0 = Pi_0 v`` the splitting energy is
    ``|v - Pi_h v0|_D^2 + (B0^+ v0, v0)``.  It can only exceed the optimal
    value ``(B^{-1} v, v)``, which is the infimum over all splittings.

    Parameters
    ----------
    pre : AuxGridPreconditioner
    Pi_0 : array_like or LinearMap
        Interpolation from the mesh unknowns to the grid unknowns.
    V : array_like, shape (n, k)
        Columns are the test vectors.

    Returns
    -------
    split, optimal : ndarray
        Both energies divided by ``|v|_A^2``, one entry per column.
    """
    P0 = np.asarray(Pi_0.entries if isinstance(Pi_0, LinearMap) else Pi_0, dtype=float)
    V = np.asarray(V, dtype=float).reshape(pre.A.dim, -1)
    V0 = P0 @ V
    W = V - pre.Pi_h @ V0
    d = 1.0 / np.diag(pre.D_inv)
    e_fine = np.einsum("i,ij->j", d, W**2)
    e_grid = np.einsum("ij,ij->j", V0, SymOperator(pre.B0).pseudo_solve(V0)) if V0.size else 0.0
    energy = np.einsum("ij,ij->j", V, pre.A.entries @ V)
    optimal = np.einsum("ij,ij->j", V, np.linalg.solve(pre.B, V))
    return (e_fine + e_grid) / energy, optimal / energy


def kappa_study(meshes, alpha=0.8, mode="aux", b0="exact", grid_bc="dirichlet",
                grid_origin=None):
    """Condition numbers of ``B A`` along a mesh family.

    Parameters
    ----------
    meshes : sequence of TriMesh
        Successive refinements.
    alpha : float
        Grid size ``h0 = alpha h`` with ``h = mesh.h_char``, in ``[0.5, 2]``.
    mode : {"aux", "jacobi", "exact"}
        Auxiliary grid preconditioner, Jacobi alone, or ``A^{-1}``.
    b0 : {"exact", "diagonal"}
        Grid solver: pseudo-inverse of ``A0`` or its inverse diagonal.
    grid_bc : {"dirichlet", "natural"}
        Boundary condition of the grid space on the boundary of its cells.

    Returns
    -------
    list of dict
        ``{h, dim, kappa_BA, kappa_B0A0, ratio}`` per level; ``ratio`` is
        ``kappa_BA`` over that of the previous level (``None`` first).
    """
    if not 0.5 <= alpha <= 2.0:
        raise ValueError("alpha must lie in [0.5, 2]")
    if len(meshes) < 3:
        warnings.warn("a refinement study needs at least three levels", stacklevel=2)
    rows = []
    for mesh in meshes:
        A = assemble_p1(mesh, "dirichlet")
        k0 = None
        if mode == "exact":
            k_ba = kappa(A, A.inverse())
        elif mode == "jacobi":
            k_ba = kappa(A, auxgrid_preconditioner(A).B)
        elif mode == "aux":
            grid = build_quad_grid(mesh, alpha * mesh.h_char, origin=grid_origin)
            A0 = assemble_q1(grid, grid_bc)
            Pi_h = nodal_interpolation(grid, mesh.nodes[mesh.free_nodes], grid_bc)
            if b0 == "exact":
                B0 = grid_pseudo_inverse(A0)
                k0 = 1.0
            elif b0 == "diagonal":
                B0 = np.diag(1.0 / np.diag(A0.entries))
                k0 = kappa(A0, B0)
            else:
                raise ValueError(f"unknown grid solver {b0!r}")
            k_ba = kappa(A, auxgrid_preconditioner(A, Pi_h, B0=B0).B)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        ratio = k_ba / rows[-1]["kappa_BA"] if rows else None
        rows.append({"h": mesh.h_char, "dim": A.dim, "kappa_BA": k_ba,
                     "kappa_B0A0": k0, "ratio": ratio})
    return rows


def write_study(rows, path=None) -> str:
    text = json.dumps(rows, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
