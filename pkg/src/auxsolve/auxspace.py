"""Auxiliary-space construction and its sharp identities.

An auxiliary system is given by a semi-SPD ``A`` on ``V``, a surjective
``Pi: Vt -> V`` and an operator ``Bt`` on ``Vt``; it induces the
preconditioner ``B = Pi Bt Pi^t`` on ``V``.  The functions below evaluate the
error-propagation norm and the extreme eigenvalues of ``BA`` twice: directly
on ``V`` and through constrained infima over the lifts in ``Vt`` (optionally
restricted to a subspace ``W`` containing ``R(Pi^t A Pi)``, and always with a
free shift in ``N(A)`` when ``A`` is singular).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotSPDError, PreconditionError, ZeroOperatorError
from .linalg import (
    LinearMap,
    Subspace,
    SymOperator,
    as_sym,
    constrained_inf,
    constrained_inf_form,
    operator_seminorm,
    pencil_extremes,
)

__all__ = [
    "AuxSystem",
    "RestrictedAux",
    "NormIdentity",
    "EigenIdentity",
    "compose",
    "lift_iterates",
    "identity_error_norm",
    "identity_eigs",
    "restrict_range",
    "lift_infimum",
    "lifted_extremes",
    "lifted_error_norm",
    "solve_via_aux",
]


class AuxSystem:
    """The triple ``(A, Pi, Bt)`` with derived ``At = Pi^t A Pi``.

    Parameters
    ----------
    A : SymOperator or array_like
        Semi-SPD operator on ``V``.
    Pi : LinearMap or array_like
        Surjective map ``Vt -> V`` (``dim V`` rows).
    Bt : array_like, optional
        Operator on ``Vt``; may be nonsymmetric.  Structural uses such as
        :func:`restrict_range` leave it unset.
    f : array_like, optional
        Right-hand side on ``V``; ``f_tilde = Pi^t f`` is derived from it.
    """

    def __init__(self, A, Pi, Bt=None, f=None):
        self.A = as_sym(A, "A").require_semi_spd("A")
        entries = Pi.entries if isinstance(Pi, LinearMap) else Pi
        self.Pi = LinearMap(entries, surjective=True)
        if self.Pi.rows != self.A.dim:
            raise DimensionError(f"Pi has {self.Pi.rows} rows, A has dim {self.A.dim}")
        m = self.Pi.cols
        if Bt is not None:
            Bt = np.array(Bt, dtype=float)
            if Bt.shape != (m, m):
                raise DimensionError(f"Bt has shape {Bt.shape}, expected {(m, m)}")
            Bt.setflags(write=False)
        self.Bt = Bt
        P = self.Pi.entries
        self.A_tilde = SymOperator(P.T @ self.A.entries @ P)
        self.f = None if f is None else np.asarray(f, dtype=float)
        self.f_tilde = None if f is None else P.T @ self.f
        Npi = self.Pi.null_basis
        if Npi.shape[1]:
            leak = np.max(np.abs(self.A_tilde.entries @ Npi))
            if leak > 1e3 * self.A_tilde.tau_null:
                raise PreconditionError(f"N(Pi) is not inside N(At): leak {leak:.3e}")

    def __repr__(self):
        return f"AuxSystem(dim={self.dim}, aux_dim={self.aux_dim})"

    @property
    def dim(self) -> int:
        return self.A.dim

    @property
    def aux_dim(self) -> int:
        return self.Pi.cols

    def require_Bt(self) -> np.ndarray:
        if self.Bt is None:
            raise PreconditionError("auxiliary system has no Bt")
        return self.Bt

    @property
    def Bt_symmetrized(self) -> np.ndarray:
        """``Bt + Bt^t - Bt^t At Bt``."""
        Bt = self.require_Bt()
        return Bt + Bt.T - Bt.T @ self.A_tilde.entries @ Bt


class RestrictedAux:
    """An auxiliary system viewed on a subspace ``W`` of ``Vt``.

    ``W`` must contain ``R(At)``.  The restricted operators are expressed in
    the coordinates of ``W.basis``.
    """

    def __init__(self, parent: AuxSystem, W: Subspace, tol=1e-10):
        if W.ambient_dim != parent.aux_dim:
            raise DimensionError(f"W lives in R^{W.ambient_dim}, Vt has dim {parent.aux_dim}")
        if not W.contains(parent.A_tilde.range_basis, tol=tol):
            raise PreconditionError("W does not contain R(At)")
        self.parent = parent
        self.W = W
        self.Qt = LinearMap(W.basis.T)

    @classmethod
    def range_of(cls, parent: AuxSystem) -> "RestrictedAux":
        """The smallest admissible choice ``W = R(At)``."""
        At = parent.A_tilde
        return cls(parent, Subspace(At.range_basis, At.dim, check=False))

    def restrict(self, M) -> np.ndarray:
        Wb = self.W.basis
        return Wb.T @ np.asarray(M, dtype=float) @ Wb

    @property
    def B_Q(self) -> SymOperator | None:
        Bt = self.parent.require_Bt()
        if not np.allclose(Bt, Bt.T, rtol=0, atol=1e-14 * max(1.0, np.max(np.abs(Bt)))):
            return None
        return SymOperator(self.restrict(Bt))

    @property
    def Bbar_Q(self) -> SymOperator:
        return SymOperator(self.restrict(self.parent.Bt_symmetrized))


@dataclass(frozen=True)
class NormIdentity:
    lhs: float
    rhs: float
    passed: bool
    tol: float


@dataclass(frozen=True)
class EigenIdentity:
    lambda_min_lhs: float
    lambda_min_rhs: float
    lambda_max_lhs: float
    lambda_max_rhs: float

    def rel_errors(self):
        lo = abs(self.lambda_min_lhs - self.lambda_min_rhs) / abs(self.lambda_min_lhs)
        hi = abs(self.lambda_max_lhs - self.lambda_max_rhs) / abs(self.lambda_max_lhs)
        return lo, hi


def compose(aux: AuxSystem) -> np.ndarray:
    """``Pi Bt Pi^t`` as a dense operator on ``V``."""
    P = aux.Pi.entries
    return P @ aux.require_Bt() @ P.T


def solve_via_aux(aux: AuxSystem, f) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-solve ``At ut = Pi^t f`` and map back; returns ``(Pi ut, ut)``."""
    P = aux.Pi.entries
    ut = aux.A_tilde.pseudo_solve(P.T @ np.asarray(f, dtype=float))
    return P @ ut, ut


def lifted_error_norm(aux: AuxSystem) -> float:
    """``|I - Bt At|_At`` evaluated on the auxiliary space."""
    Bt = aux.require_Bt()
    E = np.eye(aux.aux_dim) - Bt @ aux.A_tilde.entries
    return operator_seminorm(E, aux.A_tilde)


def lift_iterates(aux: AuxSystem, f, u0, m: int):
    """Run the iteration on ``V`` and an equivalent one on ``Vt``.

    Each ``u^k`` is lifted to its minimum-norm preimage; the drift of those
    preimages away from the auxiliary iteration lies in ``N(Pi)`` and is
    subtracted cumulatively, which yields an auxiliary sequence with
    ``Pi ut^k = u^k``.

    Returns
    -------
    us : ndarray, shape (m + 1, dim V)
    uts : ndarray, shape (m + 1, dim Vt)
    """
    Bt = aux.require_Bt()
    A = aux.A.entries
    P = aux.Pi.entries
    f = np.asarray(f, dtype=float)
    B = compose(aux)
    us = [np.asarray(u0, dtype=float)]
    for _ in range(m):
        u = us[-1]
        us.append(u + B @ (f - A @ u))
    Pinv = aux.Pi.pseudo_inverse()
    ubar = [Pinv @ u for u in us]
    ft = P.T @ f
    At = aux.A_tilde.entries
    shift = np.zeros(aux.aux_dim)
    uts = [ubar[0]]
    for k in range(m):
        phi = ubar[k + 1] - ubar[k] - Bt @ (ft - At @ ubar[k])
        shift = shift + phi
        uts.append(ubar[k + 1] - shift)
    return np.array(us), np.array(uts)


def _lift_setup(aux: AuxSystem, restricted: RestrictedAux | None):
    """Constraint ``Q Pi W y = Q v`` and the range data of ``A``."""
    A = aux.A
    if A.rank == 0:
        raise ZeroOperatorError("A is the zero operator")
    Q = A.range_basis.T
    AQ = Q @ A.entries @ Q.T
    C = Q @ aux.Pi.entries
    if restricted is not None:
        if restricted.parent is not aux:
            raise PreconditionError("restricted view belongs to another system")
        C = C @ restricted.W.basis
    return Q, AQ, C


def lifted_extremes(aux: AuxSystem, restricted: RestrictedAux | None = None,
                    symmetrized=False):
    """Infimum and supremum of the lifted infimum functional on the ``A``-sphere.

    The functional is ``v -> inf {(G^{-1} w, w) : w in W, Q Pi w = Q v}``
    with ``G`` the auxiliary operator (or its symmetrization) restricted to
    ``W``.  The joint infimum over lifts and null-space shifts is a single
    equality-constrained quadratic problem whose value is a quadratic form in
    ``Q v``; its extremes over ``|v|_A = 1`` are those of the pencil
    ``(S, A_Q)``.
    """
    aux.require_Bt()
    _, AQ, C = _lift_setup(aux, restricted)
    if symmetrized:
        G = SymOperator(aux.Bt_symmetrized) if restricted is None else restricted.Bbar_Q
        G.require_spd("symmetrized auxiliary operator")
    else:
        G = SymOperator(aux.Bt) if restricted is None else restricted.B_Q
        if G is None:
            raise NotSPDError("restricted Bt is not symmetric")
        G.require_spd("auxiliary preconditioner")
    S, _ = constrained_inf_form(G, C)
    return pencil_extremes(S, AQ)


def identity_error_norm(aux: AuxSystem, restricted: RestrictedAux | None = None,
                        tol=1e-8) -> NormIdentity:
    """Both sides of the auxiliary error-norm identity.

    ``lhs = |I - BA|_A^2`` with ``B = Pi Bt Pi^t``.  ``rhs = 1 - 1/s`` where
    ``s`` is the supremum over ``v`` in ``R(A)`` with ``|v|_A = 1`` of the
    joint infimum over ``phi`` in ``N(A)`` and lifts ``Pi w = v + phi``
    (``w`` in ``W``) of ``(Bbar^{-1} w, w)``, with ``Bbar`` the symmetrized
    auxiliary operator (restricted to ``W`` when given).
    """
    B = compose(aux)
    lhs = operator_seminorm(np.eye(aux.dim) - B @ aux.A.entries, aux.A) ** 2
    sup = lifted_extremes(aux, restricted, symmetrized=True)[1]
    rhs = 1.0 - 1.0 / sup
    return NormIdentity(lhs, rhs, bool(abs(lhs - rhs) <= tol * (1.0 + abs(rhs))), tol)


def identity_eigs(aux: AuxSystem, restricted: RestrictedAux | None = None) -> EigenIdentity:
    """Extreme eigenvalues of ``BA`` on ``R(A)``, directly and through lifts.

    The direct side comes from the pencil ``(Q A B A Q^t, A_Q)``; the other
    side inverts the supremum and infimum of the lifted infimum functional of
    ``Bt`` (restricted to ``W`` when given).  ``lambda_min`` is the smallest
    nonzero eigenvalue.
    """
    smin, smax = lifted_extremes(aux, restricted, symmetrized=False)
    Q, AQ, _ = _lift_setup(aux, restricted)
    B = compose(aux)
    QA = Q @ aux.A.entries
    lmin_l, lmax_l = pencil_extremes(QA @ (0.5 * (B + B.T)) @ QA.T, AQ)
    return EigenIdentity(lmin_l, 1.0 / smax, lmax_l, 1.0 / smin)


def lift_infimum(aux: AuxSystem, v, restricted: RestrictedAux | None = None,
                 shift_null=True, symmetrized=False) -> float:
    """``inf (G^{-1} w, w)`` over lifts of ``v``.

    ``G`` is ``Bt`` or its symmetrization.  With ``shift_null`` the
    constraint is ``Pi w = v + phi`` for some ``phi`` in ``N(A)``; without it
    the lift must hit ``v`` exactly.
    """
    v = np.asarray(v, dtype=float)
    if restricted is None:
        G = SymOperator(aux.Bt_symmetrized if symmetrized else aux.require_Bt())
        Wb = np.eye(aux.aux_dim)
    else:
        G = restricted.Bbar_Q if symmetrized else restricted.B_Q
        Wb = restricted.W.basis
    C = aux.Pi.entries @ Wb
    target = v
    if shift_null:
        Q = aux.A.range_basis.T
        C, target = Q @ C, Q @ v
    return constrained_inf(G, C, target)[0]


def restrict_range(A, B=None) -> AuxSystem:
    """The system on ``V`` seen as an auxiliary system for ``A_Q`` on ``R(A)``.

    ``V <- R(A)``, ``Vt <- V``, ``Pi <- Q`` and ``A <- A_Q = Q A Q^t``; a
    preconditioner ``B`` on ``V`` becomes the auxiliary operator.
    """
    A = as_sym(A, "A").require_semi_spd("A")
    if A.rank == 0:
        raise ZeroOperatorError("A = 0 has a trivial range")
    Q = A.range_basis.T
    return AuxSystem(Q @ A.entries @ Q.T, Q, B)
