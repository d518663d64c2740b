"""Triangle meshes: validation, Triangle-format IO and a test family."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ..errors import MeshError

__all__ = ["TriMesh", "read_triangle", "write_triangle", "square_mesh", "lshape_mesh", "mesh_family"]


def _signed_areas(nodes, tris):
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _diameters(nodes, tris):
    P = nodes[tris]
    edges = [P[:, 1] - P[:, 0], P[:, 2] - P[:, 1], P[:, 0] - P[:, 2]]
    return np.max([np.linalg.norm(e, axis=1) for e in edges], axis=0)


def boundary_nodes(tris, n_nodes) -> np.ndarray:
    """Flags of nodes on edges that belong to exactly one triangle."""
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    flags = np.zeros(n_nodes, dtype=bool)
    flags[uniq[counts == 1].ravel()] = True
    return flags


class TriMesh:
    """A validated 2D triangulation.

    Triangles are reoriented counterclockwise.  Boundary flags default to
    the nodes on the topological boundary.

    Attributes
    ----------
    h : float
        Largest element diameter.
    h_char : float
        Characteristic size ``sqrt(2 * mean area)``; ``1/n`` for a square
        cut into ``2 n^2`` triangles.
    quasi_uniformity : float
        Ratio of largest to smallest element diameter.
    """

    def __init__(self, nodes, triangles, boundary_flags=None):
        nodes = np.array(nodes, dtype=float)
        tris = np.array(triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2 or len(nodes) == 0:
            raise MeshError(f"nodes must be an (n, 2) array, got {nodes.shape}")
        if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
            raise MeshError(f"triangles must be an (m, 3) array, got {tris.shape}")
        if tris.min() < 0 or tris.max() >= len(nodes):
            raise MeshError("triangle index out of range")
        span = np.ptp(nodes, axis=0).max()
        if len(nodes) > 1:
            dist, _ = cKDTree(nodes).query(nodes, k=2)
            if dist[:, 1].min() <= 1e-12 * span:
                raise MeshError("duplicate nodes")
        area = _signed_areas(nodes, tris)
        diam = _diameters(nodes, tris)
        bad = np.abs(area) <= 1e-14 * diam**2
        if bad.any():
            raise MeshError(f"degenerate triangle {int(np.flatnonzero(bad)[0])}")
        flip = area < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        if boundary_flags is None:
            boundary_flags = boundary_nodes(tris, len(nodes))
        flags = np.asarray(boundary_flags, dtype=bool)
        if flags.shape != (len(nodes),):
            raise MeshError("one boundary flag per node is required")
        for a in (nodes, tris, flags):
            a.setflags(write=False)
        self.nodes, self.triangles, self.boundary_flags = nodes, tris, flags
        self.h = float(diam.max())
        self.h_char = float(np.sqrt(2.0 * np.abs(area).mean()))
        self.quasi_uniformity = float(diam.max() / diam.min())

    def __repr__(self):
        return f"TriMesh(nodes={self.n_nodes}, triangles={len(self.triangles)}, h={self.h:.4g})"

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_flags)

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.nodes, self.triangles)


def _data_lines(path):
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line.split()


def read_triangle(node_path, ele_path=None) -> TriMesh:
    """Read a 2D mesh from Triangle ``.node`` and ``.ele`` files.

    Node attributes are ignored; a boundary marker column, when present,
    sets the boundary flags (nonzero means boundary).  Numbering may start
    at 0 or 1.
    """
    node_path = Path(node_path)
    ele_path = Path(ele_path) if ele_path is not None else node_path.with_suffix(".ele")
    try:
        rows = list(_data_lines(node_path))
        n, dim, n_attr, n_mark = (int(x) for x in rows[0][:4])
        if dim != 2:
            raise MeshError(f"only 2D meshes are supported, got dim {dim}")
        body = rows[1:n + 1]
        ids = np.array([int(r[0]) for r in body])
        nodes = np.array([[float(r[1]), float(r[2])] for r in body])
        flags = None
        if n_mark:
            flags = np.array([int(r[3 + n_attr]) != 0 for r in body])
        erows = list(_data_lines(ele_path))
        m, per = int(erows[0][0]), int(erows[0][1])
        if per < 3:
            raise MeshError("elements need at least three nodes")
        tris = np.array([[int(x) for x in r[1:4]] for r in erows[1:m + 1]])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"cannot parse {node_path} / {ele_path}: {exc}") from exc
    if len(nodes) != n or len(tris) != m:
        raise MeshError("file is shorter than its header")
    base = ids.min()
    if not np.array_equal(np.sort(ids), np.arange(base, base + n)):
        raise MeshError("node numbers are not consecutive")
    order = np.argsort(ids)
    nodes = nodes[order]
    if flags is not None:
        flags = flags[order]
    return TriMesh(nodes, tris - base, flags)


def write_triangle(mesh: TriMesh, stem):
    """Write ``stem.node`` and ``stem.ele`` (1-based, with boundary markers)."""
    stem = Path(stem)
    lines = [f"{mesh.n_nodes} 2 0 1"]
    for k, ((x, y), b) in enumerate(zip(mesh.nodes, mesh.boundary_flags), start=1):
        lines.append(f"{k} {x:.17g} {y:.17g} {int(b)}")
    stem.with_suffix(".node").write_text("\n".join(lines) + "\n")
    lines = [f"{len(mesh.triangles)} 3 0"]
    for k, t in enumerate(mesh.triangles + 1, start=1):
        lines.append(f"{k} {t[0]} {t[1]} {t[2]}")
    stem.with_suffix(".ele").write_text("\n".join(lines) + "\n")


def square_mesh(n, warp=0.05) -> TriMesh:
    """Triangulated unit square with ``n`` intervals per side.

    Each square is cut along its diagonal; interior nodes are then moved by
    a smooth displacement vanishing on the boundary so the mesh is not
    aligned with any structured grid.
    """
    if n < 1:
        raise MeshError("n must be positive")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    x, y = X.ravel(), Y.ravel()
    on_edge = (x == 0) | (x == 1) | (y == 0) | (y == 1)
    dx = warp * np.sin(2 * np.pi * x) * np.sin(np.pi * y)
    dy = warp * np.sin(np.pi * x) * np.sin(2 * np.pi * y)
    dx[on_edge] = dy[on_edge] = 0.0
    nodes = np.column_stack([x + dx, y + dy])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh(nodes, tris, on_edge)


def lshape_mesh(n) -> TriMesh:
    """Unit square minus its upper-right quarter; ``n`` (even) intervals per side."""
    if n < 2 or n % 2:
        raise MeshError("n must be a positive even number")
    sq = square_mesh(n, warp=0.0)
    c = sq.nodes[sq.triangles].mean(axis=1)
    keep = ~((c[:, 0] > 0.5) & (c[:, 1] > 0.5))
    used = np.unique(sq.triangles[keep])
    remap = np.full(sq.n_nodes, -1)
    remap[used] = np.arange(len(used))
    return TriMesh(sq.nodes[used], remap[sq.triangles[keep]])


def mesh_family(levels=(8, 16, 32, 64), warp=0.05, shape="square") -> list[TriMesh]:
    """Refinement family of square (warped) or L-shaped meshes."""
    if shape == "square":
        return [square_mesh(n, warp) for n in levels]
    if shape == "lshape":
        return [lshape_mesh(n) for n in levels]
    raise ValueError(f"unknown domain shape {shape!r}")
