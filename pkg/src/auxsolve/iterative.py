"""Stationary iterations and preconditioned conjugate gradients.

Both definite and semidefinite ``A`` are supported.  For semidefinite ``A``
convergence is measured on the range: ``Q u^m -> Q u`` with ``Q`` the
orthogonal projection onto ``R(A)``, or equivalently ``|u - u^m|_A -> 0``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import BreakdownError, DimensionError, NotSPDError, PreconditionError
from .linalg import EPS, SymOperator, as_sym, operator_seminorm, pencil_extremes

__all__ = [
    "StationaryScheme",
    "IterationTrace",
    "ConvergenceCertificate",
    "step",
    "run_stationary",
    "symmetrize",
    "convergence_certificate",
    "pcg_solve",
    "pcg_bound",
    "reference_solution",
    "in_range",
]

# Tolerance multiplier for "f lies in R(A)".
_RANGE_SLACK = 1e3


def in_range(A: SymOperator, f) -> bool:
    """Whether ``f`` has no component in ``N(A)`` up to roundoff."""
    f = np.asarray(f, dtype=float)
    N = A.null_basis
    if N.shape[1] == 0:
        return True
    leak = np.linalg.norm(N.T @ f)
    return bool(leak <= _RANGE_SLACK * A.dim * EPS * max(1.0, np.linalg.norm(f)))


def reference_solution(A, f) -> np.ndarray:
    """Minimum-norm solution ``A^+ f``."""
    return as_sym(A).pseudo_solve(f)


@dataclass(frozen=True)
class StationaryScheme:
    """The iteration ``u <- u + B (f - A u)``."""

    A: SymOperator
    B: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        A = as_sym(self.A, "A").require_semi_spd("A")
        B = np.array(self.B, dtype=float)
        f = np.array(self.f, dtype=float)
        if B.shape != (A.dim, A.dim) or f.shape != (A.dim,):
            raise DimensionError(
                f"A is {A.dim}x{A.dim} but B has shape {B.shape} and f {f.shape}"
            )
        if not in_range(A, f):
            raise PreconditionError("f is not in the range of A")
        B.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "f", f)


@dataclass(frozen=True)
class IterationTrace:
    """Iterates with their energy and projected errors against a reference."""

    iterates: np.ndarray
    energy_errors: np.ndarray
    projected_errors: np.ndarray
    converged: bool = False
    reference: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.iterates)
        if len(self.energy_errors) != n or len(self.projected_errors) != n:
            raise DimensionError("trace sequences have different lengths")

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def solution(self) -> np.ndarray:
        return self.iterates[-1]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("iter,energy_error,projected_error\n")
        for m, (e, p) in enumerate(zip(self.energy_errors, self.projected_errors)):
            buf.write(f"{m},{e:.17g},{p:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _trace_against(A, iterates, u_ref, converged):
    Q = A.range_basis.T
    E = u_ref[None, :] - iterates
    energy = np.sqrt(np.maximum(0.0, np.einsum("ij,jk,ik->i", E, A.entries, E)))
    projected = np.linalg.norm(E @ Q.T, axis=1)
    iterates.setflags(write=False)
    return IterationTrace(iterates, energy, projected, converged, u_ref)


def step(s: StationaryScheme, u_m) -> np.ndarray:
    u_m = np.asarray(u_m, dtype=float)
    if u_m.shape != s.f.shape:
        raise DimensionError(f"iterate has shape {u_m.shape}, expected {s.f.shape}")
    return u_m + s.B @ (s.f - s.A.entries @ u_m)


def run_stationary(s: StationaryScheme, u0, steps: int) -> IterationTrace:
    """``steps`` iterations from ``u0``, traced against ``A^+ f``."""
    us = [np.asarray(u0, dtype=float)]
    for _ in range(steps):
        us.append(step(s, us[-1]))
    return _trace_against(s.A, np.array(us), reference_solution(s.A, s.f), False)


def symmetrize(A, B) -> SymOperator:
    """``B + B^t - B^t A B``, the operator of the two half-step scheme."""
    A = as_sym(A, "A")
    B = np.asarray(B, dtype=float)
    if B.shape != (A.dim, A.dim):
        raise DimensionError(f"B has shape {B.shape}, expected {(A.dim, A.dim)}")
    return SymOperator(B + B.T - B.T @ A.entries @ B)


@dataclass(frozen=True)
class ConvergenceCertificate:
    spectral_radius: float
    is_convergent: bool
    norm_identity_left: float
    norm_identity_right: float | None
    identity_available: bool


def convergence_certificate(A, B) -> ConvergenceCertificate:
    """Convergence data of ``u <- u + B (f - A u)``.

    The spectral radius is that of ``I - B_Q A_Q`` on ``R(A)`` (which is
    ``rho(I - BA)`` when ``A`` is SPD).  The squared error norm
    ``|I - BA|_A^2`` is computed directly, and a second time as
    ``1 - 1 / sup (Bbar_Q^{-1} v, v)`` over the ``A``-unit sphere of
    ``R(A)`` when the restricted symmetrization is SPD; otherwise the
    second value is ``None``.
    """
    A = as_sym(A, "A").require_semi_spd("A")
    B = np.asarray(B, dtype=float)
    n = A.dim
    Q = A.range_basis.T
    AQ = Q @ A.entries @ Q.T
    E = np.eye(A.rank) - Q @ B @ Q.T @ AQ
    rho = float(np.max(np.abs(sla.eigvals(E)))) if A.rank else 0.0

    left = operator_seminorm(np.eye(n) - B @ A.entries, A) ** 2
    BbarQ = SymOperator(Q @ symmetrize(A, B).entries @ Q.T)
    if A.rank and BbarQ.is_spd:
        sup = pencil_extremes(BbarQ.inverse(), AQ)[1]
        right = 1.0 - 1.0 / sup
        available = True
    else:
        right, available = None, False
    return ConvergenceCertificate(rho, rho < 1.0, left, right, available)


def pcg_bound(kappa: float, m) -> np.ndarray:
    """Classical factor ``2 ((sqrt k - 1) / (sqrt k + 1))^m``."""
    sk = np.sqrt(kappa)
    return 2.0 * ((sk - 1.0) / (sk + 1.0)) ** np.asarray(m, dtype=float)


def pcg_solve(A, B, f, u0=None, tol=1e-10, max_iter=None) -> IterationTrace:
    """Preconditioned conjugate gradients for a semi-SPD system.

    Parameters
    ----------
    A : SymOperator or array_like
        Semi-SPD system operator.
    B : array_like
        Symmetric preconditioner, SPD on ``R(A)``.
    f : array_like
        Right-hand side in ``R(A)``.
    u0 : array_like, optional
        Initial guess, zero by default.
    tol : float
        Stop once ``|Q r^m| <= tol |Q r^0|``.
    max_iter : int, optional
        Defaults to ``10 * dim``.

    Returns
    -------
    IterationTrace
        Errors are measured against the minimum-norm solution ``A^+ f``.

    Raises
    ------
    BreakdownError
        If ``(A p, p)`` vanishes before convergence.
    NotSPDError
        If ``(B r, r) <= 0`` for a nonzero residual.
    """
    A = as_sym(A, "A").require_semi_spd("A")
    B = np.asarray(B.entries if isinstance(B, SymOperator) else B, dtype=float)
    f = np.asarray(f, dtype=float)
    n = A.dim
    if B.shape != (n, n) or f.shape != (n,):
        raise DimensionError("dimension mismatch between A, B and f")
    if not in_range(A, f):
        raise PreconditionError("f is not in the range of A; least-squares semantics are not defined")
    if max_iter is None:
        max_iter = 10 * n
    Q = A.range_basis.T
    Am = A.entries

    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    r = f - Am @ u
    z = B @ r
    p = z.copy()
    rz = float(r @ z)
    qr0 = np.linalg.norm(Q @ r)
    us = [u.copy()]
    converged = qr0 == 0.0
    if not converged and rz <= 0.0:
        raise NotSPDError(f"(B r, r) = {rz:.3e} <= 0 at iteration 0")

    for m in range(max_iter):
        if np.linalg.norm(Q @ r) <= tol * qr0:
            converged = True
            break
        Ap = Am @ p
        pAp = float(p @ Ap)
        if pAp <= A.tau_null * float(p @ p):
            raise BreakdownError("(A p, p) vanished", m)
        alpha = rz / pAp
        u = u + alpha * p
        r = r - alpha * Ap
        z = B @ r
        rz_new = float(r @ z)
        us.append(u.copy())
        if rz_new <= 0.0 and np.linalg.norm(Q @ r) > tol * qr0:
            raise NotSPDError(f"(B r, r) = {rz_new:.3e} <= 0 at iteration {m + 1}")
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new
    else:
        converged = bool(np.linalg.norm(Q @ r) <= tol * qr0)

    return _trace_against(A, np.array(us), A.pseudo_solve(f), converged)
