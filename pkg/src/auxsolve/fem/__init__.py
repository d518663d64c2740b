"""Finite element demo: P1 triangles preconditioned on an auxiliary Q1 grid."""

from .assembly import assemble_p1, assemble_q1
from .auxgrid import (
    QuadGrid,
    auxgrid_preconditioner,
    build_quad_grid,
    kappa_study,
    nodal_interpolation,
    p1_interpolation,
    splitting_energies,
)
from .mesh import TriMesh, lshape_mesh, mesh_family, read_triangle, square_mesh, write_triangle
