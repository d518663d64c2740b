import numpy as np
import pytest
from conftest import power_iteration
from hypothesis import given, settings
from hypothesis import strategies as st

from auxsolve import errors
from auxsolve.generators import (
    convergent_preconditioner,
    neumann_laplacian,
    random_semi_spd,
    random_spd,
    tridiag,
)
from auxsolve.iterative import (
    StationaryScheme,
    convergence_certificate,
    pcg_bound,
    pcg_solve,
    run_stationary,
    step,
    symmetrize,
)
from auxsolve.linalg import SymOperator, pencil_extremes

seeds = st.integers(0, 2**32 - 1)


# -- stationary steps -----------------------------------------------------


def test_exact_step_converges_in_one(rng):
    u = rng.standard_normal(4)
    s = StationaryScheme(np.eye(4), np.eye(4), u)
    assert np.allclose(step(s, np.zeros(4)), u)


def test_zero_preconditioner_is_stationary(rng):
    A = random_spd(rng, 4)
    u0 = rng.standard_normal(4)
    s = StationaryScheme(A, np.zeros((4, 4)), A @ np.ones(4))
    assert np.array_equal(step(s, u0), u0)


def test_jacobi_step():
    A = tridiag(3)
    s = StationaryScheme(A, np.diag(1 / np.diag(A)), np.array([1.0, 0.0, 1.0]))
    assert np.allclose(step(s, np.zeros(3)), [0.5, 0.0, 0.5])


def test_rhs_outside_range_rejected():
    with pytest.raises(errors.PreconditionError):
        StationaryScheme(neumann_laplacian(4), np.eye(4), np.ones(4))


def test_dimension_mismatch():
    with pytest.raises(errors.DimensionError):
        StationaryScheme(np.eye(3), np.eye(2), np.ones(3))


def test_stationary_trace_decreases(rng):
    A = random_semi_spd(rng, 6, 1)
    B = convergent_preconditioner(rng, A)
    f = A @ rng.standard_normal(6)
    tr = run_stationary(StationaryScheme(A, B, f), np.zeros(6), 30)
    e = tr.energy_errors
    assert np.all(e[1:] <= e[:-1] * (1 + 1e-12))
    assert tr.iterations == 30


def test_trace_csv(tmp_path, rng):
    A = random_spd(rng, 3)
    tr = run_stationary(StationaryScheme(A, 0.1 * np.eye(3), A @ np.ones(3)), np.zeros(3), 2)
    text = tr.to_csv(tmp_path / "t.csv")
    lines = text.splitlines()
    assert lines[0] == "iter,energy_error,projected_error"
    assert len(lines) == 4
    assert (tmp_path / "t.csv").read_text() == text


# -- symmetrization -------------------------------------------------------


def test_symmetrize_exact_solver_fixed(rng):
    A = random_spd(rng, 4)
    B = np.linalg.inv(A)
    assert np.allclose(symmetrize(A, B).entries, B, atol=1e-12)


def test_symmetrize_zero():
    assert np.array_equal(symmetrize(tridiag(3), np.zeros((3, 3))).entries, np.zeros((3, 3)))


def test_symmetrize_jacobi_entrywise():
    A = tridiag(3)
    Dinv = np.diag(1 / np.diag(A))
    oracle = 2 * Dinv - Dinv @ A @ Dinv
    assert np.allclose(symmetrize(A, Dinv).entries, oracle, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 8))
def test_symmetrized_error_is_product(seed, n):
    """I - Bbar A = (I - B^t A)(I - B A)."""
    r = np.random.default_rng(seed)
    A = random_spd(r, n)
    B = r.standard_normal((n, n))
    I = np.eye(n)
    lhs = I - symmetrize(A, B).entries @ A
    assert np.allclose(lhs, (I - B.T @ A) @ (I - B @ A), atol=1e-9 * (1 + np.abs(lhs).max()))


# -- convergence certificate ---------------------------------------------


def test_certificate_exact_solver(rng):
    A = random_spd(rng, 5)
    c = convergence_certificate(A, np.linalg.inv(A))
    assert c.spectral_radius == pytest.approx(0.0, abs=1e-12)
    assert c.norm_identity_left == pytest.approx(0.0, abs=1e-12)
    assert c.norm_identity_right == pytest.approx(0.0, abs=1e-12)


def test_certificate_richardson():
    A = tridiag(3)
    c = convergence_certificate(A, 0.25 * np.eye(3))
    target = ((2 + np.sqrt(2)) / 4) ** 2
    assert c.norm_identity_left == pytest.approx(target, abs=1e-10)
    assert c.norm_identity_right == pytest.approx(target, abs=1e-10)
    assert c.is_convergent


def test_certificate_gauss_seidel_neumann():
    A = neumann_laplacian(4)
    B = np.linalg.inv(np.tril(A))
    c = convergence_certificate(A, B)
    assert c.norm_identity_left == pytest.approx(c.norm_identity_right, abs=1e-10)
    assert c.norm_identity_left < 1
    # power-iteration oracle on the A-whitened error operator restricted to R(A)
    S = SymOperator(A)
    Q = S.range_basis.T
    AQ = Q @ A @ Q.T
    w, V = np.linalg.eigh(AQ)
    h, hi = (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T
    E = Q @ (np.eye(4) - B @ A) @ Q.T
    M = h @ E @ hi
    assert power_iteration(M.T @ M) == pytest.approx(c.norm_identity_left, rel=1e-8)


def test_certificate_divergent_has_no_identity():
    A = tridiag(3)
    c = convergence_certificate(A, 2.0 * np.eye(3))
    assert not c.is_convergent
    assert not c.identity_available and c.norm_identity_right is None


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(3, 9), st.integers(0, 2))
def test_norm_identity_property(seed, n, null_dim):
    r = np.random.default_rng(seed)
    A = random_semi_spd(r, n, null_dim) if null_dim else random_spd(r, n)
    B = convergent_preconditioner(r, A, symmetric=False)
    c = convergence_certificate(A, B)
    assert c.identity_available
    assert c.norm_identity_left == pytest.approx(c.norm_identity_right, rel=1e-8, abs=1e-12)
    assert c.spectral_radius <= np.sqrt(c.norm_identity_left) * (1 + 1e-10)


# -- PCG ------------------------------------------------------------------


def test_pcg_identity_one_iteration(rng):
    f = rng.standard_normal(4)
    tr = pcg_solve(np.eye(4), np.eye(4), f)
    assert tr.iterations == 1 and tr.converged
    assert np.allclose(tr.solution, f)


def test_pcg_two_distinct_eigenvalues():
    tr = pcg_solve(np.diag([1.0, 2.0]), np.eye(2), np.array([1.0, 1.0]))
    assert tr.iterations <= 2 and tr.converged
    assert np.allclose(tr.solution, [1.0, 0.5])


@pytest.mark.parametrize("spectrum", [[1, 1, 2, 2, 3], [5, 5, 5, 1], [1, 2, 3, 4, 5, 6], [2, 2, 7, 7, 7, 9, 9]])
def test_pcg_finite_termination(spectrum):
    A = np.diag(np.asarray(spectrum, dtype=float))
    f = np.ones(len(spectrum))
    tr = pcg_solve(A, np.eye(len(spectrum)), f, tol=1e-12)
    assert tr.converged
    assert tr.iterations <= len(set(spectrum))


def test_pcg_neumann_bound():
    A = neumann_laplacian(8)
    f = A @ np.random.default_rng(3).standard_normal(8)
    tr = pcg_solve(A, np.eye(8), f, tol=1e-12)
    S = SymOperator(A)
    P = S.range_basis
    lo, hi = pencil_extremes(P.T @ A @ A @ P, P.T @ A @ P)
    w = np.linalg.eigvalsh(A)[1:]
    assert hi / lo == pytest.approx(w[-1] / w[0], rel=1e-10)
    m = np.arange(len(tr.energy_errors))
    bound = pcg_bound(hi / lo, m) * tr.energy_errors[0]
    assert np.all(tr.energy_errors <= bound * (1 + 1e-9))
    assert tr.projected_errors[-1] <= 1e-9 * tr.projected_errors[0]


def test_pcg_rhs_outside_range():
    with pytest.raises(errors.PreconditionError):
        pcg_solve(neumann_laplacian(4), np.eye(4), np.ones(4))


def test_pcg_indefinite_preconditioner():
    with pytest.raises(errors.NotSPDError):
        pcg_solve(np.eye(2), -np.eye(2), np.ones(2))


def test_pcg_zero_rhs(rng):
    tr = pcg_solve(random_spd(rng, 3), np.eye(3), np.zeros(3))
    assert tr.converged and tr.iterations == 0


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(3, 10))
def test_pcg_bound_with_preconditioner(seed, n):
    r = np.random.default_rng(seed)
    A = random_semi_spd(r, n, 1)
    B = random_spd(r, n)
    f = A @ r.standard_normal(n)
    S = SymOperator(A)
    P = S.range_basis
    lo, hi = pencil_extremes(P.T @ A @ B @ A @ P, P.T @ A @ P)
    tr = pcg_solve(A, B, f, tol=1e-12)
    m = np.arange(len(tr.energy_errors))
    assert np.all(tr.energy_errors <= pcg_bound(hi / lo, m) * tr.energy_errors[0] * (1 + 1e-9) + 1e-13)
