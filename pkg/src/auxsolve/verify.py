"""Seeded verification suite: every identity evaluated by two routes.

Each check produces a :class:`VerificationReport` whose ``theorem`` field is
a descriptive tag.  Equalities pass when ``|lhs - rhs| <= tol (1 + |rhs|)``;
bounds (tags ending in ``_bound``) pass when ``lhs <= rhs (1 + tol)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .auxspace import (
    AuxSystem,
    RestrictedAux,
    identity_eigs,
    identity_error_norm,
    lift_iterates,
    lifted_error_norm,
)
from .generators import (
    convergent_preconditioner,
    neumann_laplacian,
    random_aux_system,
    random_semi_spd,
    random_spd,
    random_surjective,
    tridiag,
)
from .iterative import convergence_certificate, pcg_bound, pcg_solve
from .linalg import (
    SymOperator,
    Subspace,
    constrained_inf,
    operator_seminorm,
    pencil_extremes,
)
from .subspace import (
    block_lower_inverse,
    build_psc,
    build_ssc,
    coordinate_decomposition,
    overlapping_blocks,
    psc_eigen_identity,
    random_decomposition,
    xz_constants,
)

__all__ = ["VerificationReport", "run_verify", "report_json", "failures"]

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class VerificationReport:
    theorem: str
    lhs: float
    rhs: float
    tol: float
    passed: bool
    seed: int
    dims: tuple

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        d["dims"] = list(self.dims)
        return {k: d[k] for k in ("theorem", "lhs", "rhs", "tol", "pass", "seed", "dims")}


def _report(tag, lhs, rhs, tol, seed, dims) -> VerificationReport:
    lhs, rhs = float(lhs), float(rhs)
    if tag.endswith("_bound"):
        ok = lhs <= rhs * (1.0 + tol)
    else:
        ok = abs(lhs - rhs) <= tol * (1.0 + abs(rhs))
    return VerificationReport(tag, lhs, rhs, tol, bool(ok), int(seed), tuple(int(d) for d in dims))


def _rng(seed, n, k):
    return np.random.default_rng([seed, n, k])


def _restricted_aux(rng, n, m, null_dim=0):
    """Aux system whose symmetrized ``Bt`` is SPD only on ``W = R(At)``.

    ``Pi`` gets a kernel, so ``R(At)`` is a proper subspace, and ``Bt`` is
    indefinite on its orthogonal complement.
    """
    A = random_semi_spd(rng, n, null_dim) if null_dim else random_spd(rng, n)
    Pi = random_surjective(rng, n, m)
    At = SymOperator(Pi.T @ A @ Pi)
    W = At.range_basis
    Wp = At.null_basis
    Bw = convergent_preconditioner(rng, W.T @ At.entries @ W)
    Bt = W @ Bw @ W.T - Wp @ Wp.T
    aux = AuxSystem(A, Pi, Bt)
    return aux, RestrictedAux(aux, Subspace(W, m, check=False))


def _iterative_checks(seed, n, tol):
    out = []
    rng = _rng(seed, n, 0)
    A = random_spd(rng, n)
    B = convergent_preconditioner(rng, A, symmetric=False)
    c = convergence_certificate(A, B)
    out.append(_report("norm_identity/spd", c.norm_identity_left, c.norm_identity_right, tol, seed, [n]))

    Bs = convergent_preconditioner(rng, A)
    e = identity_eigs(AuxSystem(A, np.eye(n), Bs))
    out.append(_report("eigen_identity/lambda_min", e.lambda_min_lhs, e.lambda_min_rhs, tol, seed, [n]))
    out.append(_report("eigen_identity/lambda_max", e.lambda_max_lhs, e.lambda_max_rhs, tol, seed, [n]))

    rng = _rng(seed, n, 1)
    A = random_semi_spd(rng, n, 1)
    B = convergent_preconditioner(rng, A, symmetric=False)
    c = convergence_certificate(A, B)
    out.append(_report("norm_identity/semidefinite", c.norm_identity_left, c.norm_identity_right,
                       tol, seed, [n]))
    Bs = convergent_preconditioner(rng, A)
    Q = SymOperator(A).range_basis.T
    lo, _ = pencil_extremes(Q @ A @ Bs @ A @ Q.T, Q @ A @ Q.T)
    ev = np.sort(np.abs(sla.eigvals(Bs @ A)))
    lam_min_nonzero = ev[ev > 1e-8 * ev[-1]][0]
    out.append(_report("eigen_identity/range_restriction", lo, lam_min_nonzero, tol, seed, [n]))

    rng = _rng(seed, n, 2)
    A = random_semi_spd(rng, n, 1)
    f = A @ rng.standard_normal(n)
    w = SymOperator(A).eigenvalues
    pos = w[w > 1e-10 * w[0]]
    kappa = pos[0] / pos[-1]
    tr = pcg_solve(A, np.eye(n), f, tol=1e-12)
    e0 = tr.energy_errors[0]
    m = np.arange(len(tr.energy_errors))
    ratio = np.max(tr.energy_errors / (pcg_bound(kappa, m) * e0))
    out.append(_report("pcg_energy_bound", ratio, 1.0, 1e-9, seed, [n]))
    return out


def _aux_checks(seed, n, tol):
    out = []
    m = n + 2
    aux = random_aux_system(_rng(seed, n, 10), n, m)
    r = identity_error_norm(aux, tol=tol)
    out.append(_report("aux_norm_identity/spd", r.lhs, r.rhs, tol, seed, [n, m]))
    rng = _rng(seed, n, 11)
    A = random_spd(rng, n)
    Pi = random_surjective(rng, n, m)
    aux_s = AuxSystem(A, Pi, convergent_preconditioner(rng, Pi.T @ A @ Pi))
    e = identity_eigs(aux_s)
    out.append(_report("aux_eigen_identity/lambda_min", e.lambda_min_lhs, e.lambda_min_rhs, tol, seed, [n, m]))
    out.append(_report("aux_eigen_identity/lambda_max", e.lambda_max_lhs, e.lambda_max_rhs, tol, seed, [n, m]))

    aux_r, view = _restricted_aux(_rng(seed, n, 12), n, m)
    r = identity_error_norm(aux_r, view, tol=tol)
    out.append(_report("aux_norm_identity/restricted", r.lhs, r.rhs, tol, seed, [n, m]))

    aux_n, view_n = _restricted_aux(_rng(seed, n, 13), n, m, null_dim=1)
    r = identity_error_norm(aux_n, view_n, tol=tol)
    out.append(_report("aux_norm_identity/semidefinite_restricted", r.lhs, r.rhs, tol, seed, [n, m]))
    rng = _rng(seed, n, 14)
    A = random_semi_spd(rng, n, 1)
    Pi = random_surjective(rng, n, m)
    At = SymOperator(Pi.T @ A @ Pi)
    W = At.range_basis
    Bw = convergent_preconditioner(rng, W.T @ At.entries @ W)
    aux_e = AuxSystem(A, Pi, W @ Bw @ W.T + At.null_basis @ At.null_basis.T)
    e = identity_eigs(aux_e, RestrictedAux(aux_e, Subspace(W, m, check=False)))
    out.append(_report("aux_eigen_identity/semidefinite_lambda_min", e.lambda_min_lhs,
                       e.lambda_min_rhs, tol, seed, [n, m]))
    out.append(_report("aux_eigen_identity/semidefinite_lambda_max", e.lambda_max_lhs,
                       e.lambda_max_rhs, tol, seed, [n, m]))

    rng = _rng(seed, n, 15)
    C = random_surjective(rng, n, m)
    Bt = random_spd(rng, m)
    v = rng.standard_normal(n)
    val, _ = constrained_inf(Bt, C, v)
    out.append(_report("aux_space_lemma", val, v @ np.linalg.solve(C @ Bt @ C.T, v), tol, seed, [n, m]))

    aux = random_aux_system(_rng(seed, n, 16), n, m)
    B = aux.Pi.entries @ aux.Bt @ aux.Pi.entries.T
    direct = operator_seminorm(np.eye(n) - B @ aux.A.entries, aux.A)
    out.append(_report("aux_error_norm", direct, lifted_error_norm(aux), tol, seed, [n, m]))

    rng = _rng(seed, n, 17)
    f = aux.A.entries @ rng.standard_normal(n)
    us, uts = lift_iterates(aux, f, rng.standard_normal(n), 10)
    gap = np.max(np.linalg.norm(uts @ aux.Pi.entries.T - us, axis=1))
    scale = 1.0 + np.max(np.linalg.norm(us, axis=1))
    out.append(_report("lifted_iterates", gap / scale, 0.0, 1e-11, seed, [n, m]))
    return out


def _subspace_checks(seed, n, tol):
    out = []
    rng = _rng(seed, n, 20)
    A = random_spd(rng, n)
    d = random_decomposition(rng, A, 3, solver="random")
    B = build_psc(d)
    diff = np.max(np.abs(B - d.Pi @ d.R_tilde @ d.Pi.T)) / (1.0 + np.max(np.abs(B)))
    out.append(_report("psc_block_form", diff, 0.0, 1e-12, seed, [n]))
    ssc = build_ssc(d)
    out.append(_report("ssc_block_form", ssc.discrepancy, 0.0, 1e-10, seed, [n]))

    J = 4
    sizes = rng.integers(1, 4, J)
    blocks = [[rng.standard_normal((sizes[i], sizes[j])) + (3 * np.eye(sizes[i]) if i == j else 0)
               for j in range(J)] for i in range(J)]
    X1 = np.block(block_lower_inverse(blocks, "substitution"))
    X2 = np.block(block_lower_inverse(blocks, "formula"))
    out.append(_report("block_triangular_inverse", np.max(np.abs(X1 - X2)) / np.max(np.abs(X1)),
                       0.0, 1e-11, seed, [J]))

    N = neumann_laplacian(n)
    e = psc_eigen_identity(overlapping_blocks(N, 2, 1))
    out.append(_report("lions_identity/lambda_min", e.lambda_min_lhs, e.lambda_min_rhs, tol, seed, [n]))
    out.append(_report("lions_identity/lambda_max", e.lambda_max_lhs, e.lambda_max_rhs, tol, seed, [n]))

    for name, dec in (("gauss_seidel", coordinate_decomposition(tridiag(n))),
                      ("neumann_block_gauss_seidel", overlapping_blocks(N, 3, 0)),
                      ("random_solvers", d)):
        x = xz_constants(dec, tol=tol)
        out.append(_report(f"xu_zikatanov/{name}/c1", x.norm_sq_direct, 1.0 - 1.0 / x.c1, tol, seed, [n]))
        out.append(_report(f"xu_zikatanov/{name}/c0", x.norm_sq_direct, 1.0 - 1.0 / (1.0 + x.c0),
                           tol, seed, [n]))
    return out


def run_verify(seed=1, dims=(4, 6), tol=DEFAULT_TOL) -> list[VerificationReport]:
    """Run every family of checks for each dimension; sorted by tag."""
    reports = []
    for n in dims:
        if n < 3:
            raise ValueError("dimensions must be at least 3")
        reports += _iterative_checks(seed, n, tol)
        reports += _aux_checks(seed, n, tol)
        reports += _subspace_checks(seed, n, tol)
    return sorted(reports, key=lambda r: (r.theorem, r.dims))


def report_json(reports, path=None) -> str:
    text = json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def failures(reports) -> list[str]:
    """One line per failed check: tag, lhs, rhs and their difference."""
    return [f"{r.theorem} dims={list(r.dims)} lhs={r.lhs:.17g} rhs={r.rhs:.17g} "
            f"|lhs-rhs|={abs(r.lhs - r.rhs):.3e}" for r in reports if not r.passed]
