import json
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from auxsolve import errors
from auxsolve.fem import (
    QuadGrid,
    TriMesh,
    assemble_p1,
    assemble_q1,
    auxgrid_preconditioner,
    build_quad_grid,
    kappa_study,
    lshape_mesh,
    mesh_family,
    nodal_interpolation,
    p1_interpolation,
    read_triangle,
    splitting_energies,
    square_mesh,
    write_triangle,
)
from auxsolve.fem.assembly import Q1_ELEMENT, p1_element_matrices, scatter
from auxsolve.fem.auxgrid import (
    grid_pseudo_inverse,
    interpolation_stability,
    kappa,
    write_study,
)
from auxsolve.linalg import SymOperator, pencil_extremes


def _sympy_p1(pts):
    """Stiffness of one triangle by symbolic integration of hat gradients."""
    x, y = sp.symbols("x y")
    P = [tuple(sp.Rational(str(c)) for c in p) for p in pts]
    hats = []
    for k in range(3):
        coeff = sp.symbols(f"h{k}_0:3")
        expr = coeff[0] + coeff[1] * x + coeff[2] * y
        sol = sp.solve([expr.subs({x: p[0], y: p[1]}) - (1 if i == k else 0)
                        for i, p in enumerate(P)], coeff)
        hats.append(expr.subs(sol))
    area = sp.Abs((P[1][0] - P[0][0]) * (P[2][1] - P[0][1])
                  - (P[2][0] - P[0][0]) * (P[1][1] - P[0][1])) / 2
    K = sp.zeros(3, 3)
    for i in range(3):
        for j in range(3):
            gi = (sp.diff(hats[i], x), sp.diff(hats[i], y))
            gj = (sp.diff(hats[j], x), sp.diff(hats[j], y))
            K[i, j] = (gi[0] * gj[0] + gi[1] * gj[1]) * area
    return np.array(K.tolist(), dtype=float)


def _gauss_q1():
    """Unit-square bilinear stiffness by 2x2 Gauss quadrature."""
    g = np.array([0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)])
    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    K = np.zeros((4, 4))
    for s in g:
        for t in g:
            grads = []
            for cx, cy in corners:
                fx = s if cx else 1 - s
                fy = t if cy else 1 - t
                dx = (1 if cx else -1) * fy
                dy = (1 if cy else -1) * fx
                grads.append((dx, dy))
            G = np.array(grads)
            K += 0.25 * G @ G.T
    return K


# -- meshes ---------------------------------------------------------------


def test_mesh_validation():
    with pytest.raises(errors.MeshError):
        TriMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])
    with pytest.raises(errors.MeshError):
        TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])
    with pytest.raises(errors.MeshError):
        TriMesh([[0, 0], [1, 0], [0, 1], [0, 0]], [[0, 1, 2]])


def test_mesh_orientation_fixed():
    m = TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert m.areas[0] == pytest.approx(0.5)


def test_square_mesh_size():
    m = square_mesh(8)
    assert m.n_nodes == 81 and len(m.triangles) == 128
    assert m.h_char == pytest.approx(1 / 8, rel=1e-12)
    assert len(m.free_nodes) == 49
    assert np.abs(m.areas).sum() == pytest.approx(1.0, rel=1e-12)
    assert m.quasi_uniformity < 2


def test_triangle_round_trip(tmp_path):
    m = square_mesh(3)
    write_triangle(m, tmp_path / "sq")
    m2 = read_triangle(tmp_path / "sq.node")
    assert np.array_equal(m.nodes, m2.nodes)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.array_equal(m.boundary_flags, m2.boundary_flags)


def test_triangle_zero_based(tmp_path):
    (tmp_path / "t.node").write_text("3 2 0 0\n0 0 0\n1 1 0\n2 0 1\n")
    (tmp_path / "t.ele").write_text("1 3 0\n0 0 1 2\n")
    m = read_triangle(tmp_path / "t.node")
    assert m.n_nodes == 3 and m.boundary_flags.all()


def test_triangle_parse_errors(tmp_path):
    (tmp_path / "t.node").write_text("3 2 0 0\n1 0 0\n2 1 0\n")
    (tmp_path / "t.ele").write_text("1 3 0\n1 1 2 3\n")
    with pytest.raises(errors.MeshError):
        read_triangle(tmp_path / "t.node")
    (tmp_path / "u.node").write_text("3 2 0 0\n1 0 0\n2 1 0\n3 0 x\n")
    (tmp_path / "u.ele").write_text("1 3 0\n1 1 2 3\n")
    with pytest.raises(errors.MeshError):
        read_triangle(tmp_path / "u.node")


# -- P1 assembly ----------------------------------------------------------


def test_p1_reference_triangle():
    K = p1_element_matrices(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))[0]
    assert np.allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)
    assert np.allclose(K, _sympy_p1([(0, 0), (1, 0), (0, 1)]), atol=1e-15)


@pytest.mark.parametrize("pts", [[(0, 0), (2, 0), (0.5, 1.5)], [(0.1, 0.2), (1.3, -0.4), (0.7, 0.9)]])
def test_p1_symbolic_oracle(pts):
    K = p1_element_matrices(np.array(pts, dtype=float), np.array([[0, 1, 2]]))[0]
    assert np.allclose(K, _sympy_p1(pts), atol=1e-13)


def test_p1_neumann_kernel():
    A = assemble_p1(square_mesh(6), "neumann")
    assert np.max(np.abs(A.entries @ np.ones(A.dim))) <= 1e-12 * A.lambda_max


def test_p1_scatter_sum():
    m = square_mesh(3)
    K = p1_element_matrices(m.nodes, m.triangles)
    total = np.zeros((m.n_nodes, m.n_nodes))
    for t, k in zip(m.triangles, K):
        total[np.ix_(t, t)] += k
    assert np.allclose(assemble_p1(m, "neumann").entries, total, atol=1e-14)
    # visiting elements in another order gives the same matrix
    perm = np.random.default_rng(0).permutation(len(K))
    assert np.allclose(scatter(m.triangles[perm], K[perm], m.n_nodes), total, atol=1e-14)


def test_shipped_two_triangle_meshes(data_dir):
    m = read_triangle(data_dir / "two_triangles.node")
    assert len(m.free_nodes) == 0
    with pytest.raises(errors.MeshError):
        assemble_p1(m, "dirichlet")
    m = read_triangle(data_dir / "crisscross.node")
    A = assemble_p1(m, "dirichlet")
    assert A.dim == 1 and A.entries[0, 0] == pytest.approx(4.0, rel=1e-14)


# -- Q1 grid ---------------------------------------------------------------


def test_q1_element_gauss_oracle():
    assert np.allclose(Q1_ELEMENT, _gauss_q1(), rtol=0, atol=1e-14)
    g = QuadGrid((0.0, 0.0), 1.0, [[0, 0]])
    cn = g.cell_nodes[0]
    assert np.allclose(assemble_q1(g).entries[np.ix_(cn, cn)], Q1_ELEMENT)


def test_q1_constant_kernel():
    g = QuadGrid((0.0, 0.0), 0.25, [[i, j] for i in range(3) for j in range(2)])
    A0 = assemble_q1(g)
    assert np.max(np.abs(A0.entries @ np.ones(A0.dim))) <= 1e-12 * A0.lambda_max


def test_q1_scatter_sum():
    g = QuadGrid((0.0, 0.0), 1.0, [[0, 0], [1, 0], [0, 1], [1, 1]])
    total = np.zeros((9, 9))
    for nodes in g.cell_nodes:
        total[np.ix_(nodes, nodes)] += Q1_ELEMENT
    assert np.allclose(assemble_q1(g).entries, total)
    A0 = assemble_q1(g, "dirichlet")
    assert A0.dim == 1 and A0.entries[0, 0] == pytest.approx(4 * 4 / 6)


def test_q1_empty_grid():
    with pytest.raises(errors.MeshError):
        assemble_q1(QuadGrid((0.0, 0.0), 1.0, np.zeros((0, 2))))


def test_grid_inside_domain():
    m = square_mesh(8, warp=0.0)
    # cells touching the boundary fall in the exclusion band
    g = build_quad_grid(m, 0.25)
    assert sorted(map(tuple, g.cells.tolist())) == [(1, 1), (1, 2), (2, 1), (2, 2)]
    g = build_quad_grid(m, 0.25, origin=(-0.1, -0.1))
    assert len(g.cells) == 9
    assert assemble_q1(g, "dirichlet").dim == 4


def test_grid_pseudo_inverse():
    g = QuadGrid((0.0, 0.0), 1.0, [[i, j] for i in range(3) for j in range(3)])
    for bc in ("natural", "dirichlet"):
        A0 = assemble_q1(g, bc)
        assert np.allclose(grid_pseudo_inverse(A0), np.linalg.pinv(A0.entries), atol=1e-12)


# -- interpolation --------------------------------------------------------


def _unit_grid():
    return QuadGrid((0.0, 0.0), 0.5, [[i, j] for i in range(2) for j in range(2)])


def test_interpolation_grid_node():
    g = _unit_grid()
    P = nodal_interpolation(g, g.node_coords).entries
    assert np.allclose(P, np.eye(g.n_nodes))


def test_interpolation_cell_center():
    g = _unit_grid()
    P = nodal_interpolation(g, [[0.25, 0.25]]).entries[0]
    corners = g.cell_nodes[g.cell_of(0, 0)]
    assert np.allclose(P[corners], 0.25)
    assert P.sum() == pytest.approx(1.0)


def test_interpolation_uncovered_point():
    P = nodal_interpolation(_unit_grid(), [[1.5, 0.5], [-0.1, 0.2]]).entries
    assert np.all(P == 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_interpolation_bilinear_formula(x, y):
    g = _unit_grid()
    row = nodal_interpolation(g, [[x, y]]).entries[0]
    assert np.all(row >= 0) and np.all(row <= 1)
    assert row.sum() == pytest.approx(1.0, abs=1e-14)
    coords = g.node_coords
    hat = np.maximum(0, 1 - np.abs(coords[:, 0] - x) / 0.5) * np.maximum(0, 1 - np.abs(coords[:, 1] - y) / 0.5)
    assert np.allclose(row, hat, atol=1e-14)
    # bilinear functions are reproduced exactly
    f = 1 + 2 * coords[:, 0] - coords[:, 1] + 3 * coords[:, 0] * coords[:, 1]
    assert row @ f == pytest.approx(1 + 2 * x - y + 3 * x * y, abs=1e-13)


# -- preconditioner --------------------------------------------------------


def test_auxgrid_jacobi_fallback():
    A = assemble_p1(square_mesh(4))
    pc = auxgrid_preconditioner(A)
    assert np.allclose(pc.B, np.diag(1 / np.diag(A.entries)))


def test_auxgrid_zero_diagonal():
    with pytest.raises(errors.NotSPDError):
        auxgrid_preconditioner(np.diag([1.0, 0.0]))


def test_auxgrid_identity_interpolation():
    A = SymOperator(np.diag([2.0, 3.0, 4.0]) - 0.5 * (np.eye(3, k=1) + np.eye(3, k=-1)))
    pc = auxgrid_preconditioner(A, np.eye(3), B0=A.inverse())
    lo, hi = pencil_extremes(A.entries @ pc.B @ A.entries, A.entries)
    assert lo >= 1 - 1e-12
    Dinv = np.diag(1 / np.diag(A.entries))
    assert hi <= pencil_extremes(A.entries @ Dinv @ A.entries, A.entries)[1] + 1 + 1e-12


def _level(n, alpha=0.8):
    m = square_mesh(n)
    A = assemble_p1(m)
    g = build_quad_grid(m, alpha * m.h_char)
    A0 = assemble_q1(g, "dirichlet")
    Pi = nodal_interpolation(g, m.nodes[m.free_nodes], "dirichlet")
    return A, A0, Pi


def test_auxgrid_symmetric_and_aux_view():
    A, A0, Pi = _level(8)
    pc = auxgrid_preconditioner(A, Pi, A0)
    assert np.max(np.abs(pc.B - pc.B.T)) <= 1e-12 * np.max(np.abs(pc.B))
    from auxsolve.auxspace import identity_eigs

    e = identity_eigs(pc.aux_view())
    k_direct = kappa(A, pc.B)
    assert e.lambda_min_lhs > 0
    assert e.lambda_max_rhs / e.lambda_min_rhs == pytest.approx(k_direct, rel=1e-7)


def test_interpolation_stability_bounded():
    consts = []
    for n in (8, 16, 32):
        A, A0, Pi = _level(n)
        consts.append(interpolation_stability(A, Pi, A0))
    assert all(b <= 1.1 * a for a, b in zip(consts, consts[1:]))


def test_p1_interpolation_hat_values(data_dir):
    m = read_triangle(data_dir / "crisscross.node")
    pts = [(0.5, 0.5), (0.25, 0.5), (0.5, 0.25), (0.1, 0.1), (0.0, 1.0), (2.0, 2.0)]
    P = p1_interpolation(m, pts).entries
    # the center hat: 1 at the center, linear to 0 at the boundary
    assert np.allclose(P[:, 0], [1.0, 0.5, 0.5, 0.2, 0.0, 0.0], atol=1e-14)


def test_p1_interpolation_at_nodes():
    m = square_mesh(6)
    P = p1_interpolation(m, m.nodes[m.free_nodes]).entries
    assert np.allclose(P, np.eye(len(m.free_nodes)), atol=1e-12)


def test_splitting_energies_dominate_optimum():
    ratios = []
    for n in (8, 16, 32):
        m = square_mesh(n)
        A, A0, Pi_h = _level(n)
        g = build_quad_grid(m, 0.8 * m.h_char)
        pre = auxgrid_preconditioner(A, Pi_h, A0)
        Pi_0 = p1_interpolation(m, g.node_coords[g.dofs("dirichlet")])
        r = np.random.default_rng(n)
        V = r.standard_normal((A.dim, 10))
        V = np.hstack([V, np.linalg.solve(A.entries, V)])
        split, optimal = splitting_energies(pre, Pi_0, V)
        assert np.all(split >= optimal * (1 - 1e-10))
        ratios.append(split.max())
    # the interpolation splitting stays stable under refinement
    assert all(b <= 1.1 * a for a, b in zip(ratios, ratios[1:]))


# -- refinement study -----------------------------------------------------


def test_kappa_study_exact_is_one():
    rows = kappa_study(mesh_family((4, 8, 16)), mode="exact")
    for r in rows:
        assert r["kappa_BA"] == pytest.approx(1.0, abs=1e-9)


def test_kappa_study_jacobi_grows():
    rows = kappa_study(mesh_family((8, 16, 32)), mode="jacobi")
    assert all(3.5 <= r["ratio"] <= 4.5 for r in rows[1:])


def test_kappa_study_aux_bounded():
    rows = kappa_study(mesh_family((8, 16, 32)))
    assert all(r["ratio"] <= 1.15 for r in rows[1:])
    assert all(r["kappa_B0A0"] == 1.0 for r in rows)
    json.loads(write_study(rows))


def test_kappa_study_diagonal_b0():
    rows = kappa_study(mesh_family((8, 16, 32)), b0="diagonal")
    assert all(r["kappa_B0A0"] > 1 for r in rows)
    # the coarse-solver conditioning carries over
    assert rows[-1]["kappa_BA"] > 2 * rows[0]["kappa_BA"]


def test_kappa_study_validation():
    with pytest.raises(ValueError):
        kappa_study(mesh_family((4, 8, 16)), alpha=3.0)
    with pytest.warns(UserWarning):
        kappa_study(mesh_family((4,)), mode="jacobi")


def test_l_shaped_domain():
    """Aux-grid conditioning stays finite and levels off on a nonconvex domain."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = kappa_study(mesh_family((16, 32), shape="lshape"))
    assert rows[0]["dim"] == 161
    assert all(np.isfinite(r["kappa_BA"]) for r in rows)
    assert rows[1]["ratio"] <= 1.15


def test_lshape_mesh():
    m = lshape_mesh(4)
    assert np.abs(m.areas).sum() == pytest.approx(0.75)
    assert m.n_nodes == 25 - 4
    with pytest.raises(errors.MeshError):
        lshape_mesh(3)
