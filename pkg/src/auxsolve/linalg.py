"""Dense symmetric linear algebra for semidefinite problems.

Everything here works on small-to-moderate dense matrices (a few thousand
rows at most).  Operators are immutable once built; spectral data is
computed on first access and never changes afterwards.
"""

from __future__ import annotations

import warnings
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionError,
    NotSemiDefiniteError,
    NotSPDError,
    NotSurjectiveError,
    PreconditionError,
)

__all__ = [
    "EPS",
    "SymOperator",
    "LinearMap",
    "Subspace",
    "as_sym",
    "jacobi_eigh",
    "seminorm",
    "operator_seminorm",
    "range_null_split",
    "constrained_inf",
    "constrained_inf_form",
    "constrained_min_form",
    "pencil_eigenvalues",
    "pencil_extremes",
    "preconditioned_extremes",
    "read_matrix",
    "write_matrix",
]

EPS = np.finfo(float).eps

# Slack on top of the null threshold when checking that S keeps N(T) inside
# N(T); the product T S N accumulates roundoff proportional to |S|.
_NULL_CHECK_SLACK = 1e3

# Relative Cholesky pivot floor (in units of n * eps) for the cheap SPD test.
_PIVOT_FLOOR = 1e6


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _vector(v, n, name="v"):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != n:
        raise DimensionError(f"{name} must be a vector of length {n}, got shape {v.shape}")
    return v


def jacobi_eigh(M, tol=1e-14, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps visit the pairs ``(p, q)``, ``p < q``, in row-major order, so the
    result is bitwise reproducible.  Iteration stops once the off-diagonal
    Frobenius norm drops below ``tol * ||M||_F``.

    Returns
    -------
    w : ndarray
        Eigenvalues in nonincreasing order.
    V : ndarray
        Orthonormal eigenvectors (columns) matching ``w``.
    """
    a = np.array(M, dtype=float)
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    V = np.eye(n)
    fro = np.linalg.norm(a)
    if fro == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= EPS * EPS * fro:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sgn = 1.0 if theta >= 0 else -1.0
                t = sgn / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


class SymOperator:
    """Dense real symmetric operator with spectral data.

    Parameters
    ----------
    entries : array_like, shape (n, n)
        Matrix of the operator; it is symmetrized as ``(M + M^T) / 2``.
    tau_null : float, optional
        Threshold below which eigenvalues count as zero.  Defaults to
        ``n * eps * max(1, lambda_max)``.
    method : {'lapack', 'jacobi'}
        Eigensolver.  ``'jacobi'`` is the cyclic Jacobi method of
        :func:`jacobi_eigh` and is only practical for small ``n``.
    """

    def __init__(self, entries, tau_null=None, method="lapack"):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {a.shape}")
        self._entries = _frozen(0.5 * (a + a.T))
        self._tau_override = tau_null
        if method not in ("lapack", "jacobi"):
            raise ValueError(f"unknown eigensolver {method!r}")
        self._method = method

    def __repr__(self):
        return f"SymOperator(dim={self.dim})"

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @cached_property
    def _spectrum(self):
        if self.dim == 0:
            return _frozen(np.zeros(0)), _frozen(np.zeros((0, 0)))
        if self._method == "jacobi":
            w, V = jacobi_eigh(self._entries)
        else:
            w, V = np.linalg.eigh(self._entries)
            w, V = w[::-1], V[:, ::-1]
        return _frozen(w), _frozen(V)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in nonincreasing order."""
        return self._spectrum[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._spectrum[1]

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0]) if self.dim else 0.0

    @property
    def tau_null(self) -> float:
        if self._tau_override is not None:
            return float(self._tau_override)
        return self.dim * EPS * max(1.0, self.lambda_max)

    @cached_property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > self.tau_null))

    @property
    def is_semi_spd(self) -> bool:
        return self.dim == 0 or bool(self.eigenvalues[-1] >= -self.tau_null)

    @property
    def is_spd(self) -> bool:
        return self.dim > 0 and bool(self.eigenvalues[-1] > self.tau_null)

    def require_semi_spd(self, name="operator"):
        if not self.is_semi_spd:
            raise NotSemiDefiniteError(
                f"{name} has eigenvalue {self.eigenvalues[-1]:.3e} < -{self.tau_null:.3e}"
            )
        return self

    def require_spd(self, name="operator"):
        if not self.is_spd:
            lo = self.eigenvalues[-1] if self.dim else float("nan")
            raise NotSPDError(f"{name} is not SPD (smallest eigenvalue {lo:.3e})")
        return self

    @property
    def range_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of the range, for a semi-SPD operator."""
        return self.eigenvectors[:, : self.rank]

    @property
    def null_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of the numerical null space."""
        return self.eigenvectors[:, self.rank :]

    def reconstruct(self) -> np.ndarray:
        V, w = self.eigenvectors, self.eigenvalues
        return (V * w) @ V.T

    def apply(self, v):
        return self._entries @ np.asarray(v, dtype=float)

    def quadratic(self, v) -> float:
        v = _vector(v, self.dim)
        return float(v @ self._entries @ v)

    @cached_property
    def _pinv(self):
        V = self.range_basis
        w = self.eigenvalues[: self.rank]
        return _frozen((V / w) @ V.T)

    def pseudo_inverse(self) -> np.ndarray:
        """Moore-Penrose inverse computed from the spectral data."""
        return self._pinv

    def pseudo_solve(self, b):
        """Minimum-norm solution of ``M x = b`` for ``b`` in the range."""
        return self._pinv @ np.asarray(b, dtype=float)

    def inverse(self) -> np.ndarray:
        self.require_spd()
        return self._pinv

    def congruence(self, P) -> "SymOperator":
        """``P^T M P`` as a new operator."""
        P = np.asarray(P, dtype=float)
        return SymOperator(P.T @ self._entries @ P)


def as_sym(M, name="operator") -> SymOperator:
    if isinstance(M, SymOperator):
        return M
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return SymOperator(M)


class LinearMap:
    """Dense rectangular map between two spaces.

    ``surjective=True`` certifies that ``rank(entries) == rows`` at
    construction and raises :class:`NotSurjectiveError` otherwise.
    """

    def __init__(self, entries, surjective=False):
        a = np.array(entries, dtype=float)
        if a.ndim != 2:
            raise DimensionError(f"expected a matrix, got shape {a.shape}")
        self._entries = _frozen(a)
        if surjective:
            self.certify_surjective()

    def __repr__(self):
        return f"LinearMap({self.rows}x{self.cols})"

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def rows(self) -> int:
        return self._entries.shape[0]

    @property
    def cols(self) -> int:
        return self._entries.shape[1]

    @property
    def T(self) -> "LinearMap":
        return LinearMap(self._entries.T)

    @cached_property
    def _svd(self):
        U, s, Vt = np.linalg.svd(self._entries, full_matrices=True)
        return U, s, Vt

    @property
    def singular_values(self) -> np.ndarray:
        return self._svd[1]

    @property
    def tau_rank(self) -> float:
        s = self.singular_values
        smax = s[0] if s.size else 0.0
        return max(self.rows, self.cols) * EPS * smax

    @cached_property
    def rank(self) -> int:
        return int(np.count_nonzero(self.singular_values > self.tau_rank))

    def is_surjective(self) -> bool:
        return self.rank == self.rows

    def certify_surjective(self, name="map"):
        if not self.is_surjective():
            raise NotSurjectiveError(f"{name} has rank {self.rank} < {self.rows} rows")
        return self

    @property
    def null_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of the null space of the map."""
        return self._svd[2][self.rank :].T

    @cached_property
    def _pinv(self):
        U, s, Vt = self._svd
        r = self.rank
        return _frozen((Vt[:r].T / s[:r]) @ U[:, :r].T)

    def pseudo_inverse(self) -> np.ndarray:
        return self._pinv

    def apply(self, v):
        return self._entries @ np.asarray(v, dtype=float)


def _as_map(C) -> LinearMap:
    return C if isinstance(C, LinearMap) else LinearMap(C)


class Subspace:
    """Subspace of R^n stored through an orthonormal basis (columns)."""

    def __init__(self, basis, ambient_dim=None, check=True):
        b = np.array(basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if ambient_dim is None:
            ambient_dim = b.shape[0]
        if b.shape[0] != ambient_dim or b.shape[1] > ambient_dim:
            raise DimensionError(f"basis of shape {b.shape} does not fit R^{ambient_dim}")
        if check and b.shape[1]:
            err = np.max(np.abs(b.T @ b - np.eye(b.shape[1])))
            if err > 1e-12:
                raise ValueError(f"basis is not orthonormal (error {err:.2e})")
        self._basis = _frozen(b)
        self._ambient = int(ambient_dim)

    @classmethod
    def span(cls, vectors, tol=None) -> "Subspace":
        """Orthonormalize the columns of ``vectors`` (rank-revealing SVD)."""
        X = np.atleast_2d(np.asarray(vectors, dtype=float))
        n = X.shape[0]
        if X.shape[1] == 0:
            return cls(np.zeros((n, 0)), n)
        U, s, _ = np.linalg.svd(X, full_matrices=False)
        if tol is None:
            tol = max(X.shape) * EPS * (s[0] if s.size else 0.0)
        r = int(np.count_nonzero(s > tol))
        return cls(U[:, :r], n, check=False)

    @classmethod
    def full(cls, n) -> "Subspace":
        return cls(np.eye(n), n, check=False)

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"

    @property
    def basis(self) -> np.ndarray:
        return self._basis

    @property
    def dim(self) -> int:
        return self._basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self._ambient

    def projector(self) -> np.ndarray:
        return self._basis @ self._basis.T

    def contains(self, X, tol=1e-10) -> bool:
        """Whether every column of ``X`` lies in the subspace (relative test)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] != self._ambient:
            X = X.T
        resid = X - self._basis @ (self._basis.T @ X)
        scale = max(1.0, float(np.max(np.abs(X))) if X.size else 1.0)
        return bool(np.max(np.abs(resid), initial=0.0) <= tol * scale)


# ---------------------------------------------------------------------------
# seminorms


def seminorm(T, v) -> float:
    """Energy seminorm ``sqrt((T v, v))`` of a semi-SPD operator."""
    T = as_sym(T).require_semi_spd("T")
    v = _vector(v, T.dim)
    q = float(v @ T.entries @ v)
    return float(np.sqrt(max(0.0, q)))


def operator_seminorm(S, T, basis=None) -> float:
    """Operator seminorm ``sup_{|v|_T = 1} |S v|_T``.

    The supremum is the largest eigenvalue of the pencil
    ``(P^T S^T T S P, P^T T P)`` with ``P`` a basis of ``R(T)``; any basis
    may be passed through ``basis``.  ``S`` must send ``N(T)`` into
    ``N(T)``, otherwise the supremum is infinite.
    """
    T = as_sym(T).require_semi_spd("T")
    S = np.asarray(S, dtype=float)
    if S.shape != (T.dim, T.dim):
        raise DimensionError(f"S has shape {S.shape}, expected {(T.dim, T.dim)}")
    if T.rank == 0:
        warnings.warn("operator_seminorm: T is the zero operator; returning 0", stacklevel=2)
        return 0.0
    N = T.null_basis
    if N.shape[1]:
        leak = np.linalg.norm(T.entries @ (S @ N), 2)
        allowed = _NULL_CHECK_SLACK * T.tau_null * (1.0 + np.linalg.norm(S, 2))
        if leak > allowed:
            raise PreconditionError(
                f"S maps N(T) into R(T): |T S N| = {leak:.3e} > {allowed:.3e}"
            )
    P = T.range_basis if basis is None else np.asarray(basis, dtype=float)
    TSP = T.entries @ (S @ P)
    M = (S @ P).T @ TSP
    lam = pencil_extremes(M, P.T @ T.entries @ P)[1]
    return float(np.sqrt(max(0.0, lam)))


def range_null_split(A):
    """Range and null space of a semi-SPD operator.

    Returns
    -------
    R : Subspace
        ``R(A)``.
    N : Subspace
        ``N(A)``.
    Q : LinearMap
        Orthogonal projection onto ``R(A)`` in the coordinates of ``R.basis``;
        ``Q^T Q`` is the orthogonal projector and ``Q Q^T = I``.
    """
    A = as_sym(A).require_semi_spd("A")
    R = Subspace(A.range_basis, A.dim, check=False)
    N = Subspace(A.null_basis, A.dim, check=False)
    return R, N, LinearMap(A.range_basis.T)


# ---------------------------------------------------------------------------
# constrained quadratic minimization


def _constrained_min(G, C: LinearMap, rhs):
    """Minimize ``w^T G w`` subject to ``C w = rhs`` column by column.

    Uses ``w = C^+ rhs + N z`` with ``N`` an orthonormal basis of ``N(C)``;
    ``N^T G N`` must be positive semidefinite.
    """
    w0 = C.pseudo_inverse() @ rhs
    N = C.null_basis
    if N.shape[1] == 0:
        return w0
    GN = G @ N
    H = 0.5 * (N.T @ GN + GN.T @ N)
    g = GN.T @ w0
    try:
        z = -sla.cho_solve(sla.cho_factor(H, lower=True), g)
    except np.linalg.LinAlgError:
        # semidefinite on N(C): any minimizer will do, take the least-norm one
        w, U = np.linalg.eigh(H)
        tau = H.shape[0] * EPS * max(1.0, abs(w).max())
        if w[0] < -tau * 1e3:
            raise NotSPDError("quadratic form is indefinite on the constraint null space")
        keep = w > tau
        z = -(U[:, keep] / w[keep]) @ (U[:, keep].T @ g)
    return w0 + N @ z


def constrained_min_form(G, C):
    """Quadratic form of ``v -> inf {w^T G w : C w = v}``.

    Returns ``(S, K)`` such that the infimum equals ``v^T S v`` and is
    attained at ``w = K v``.  ``G`` only needs to be positive semidefinite
    on ``N(C)``.
    """
    G = np.asarray(G.entries if isinstance(G, SymOperator) else G, dtype=float)
    C = _as_map(C).certify_surjective("C")
    if G.shape != (C.cols, C.cols):
        raise DimensionError(f"form of shape {G.shape} does not match map {C}")
    K = _constrained_min(G, C, np.eye(C.rows))
    S = K.T @ G @ K
    return 0.5 * (S + S.T), K


def constrained_inf_form(Bt, C):
    """Quadratic form of ``v -> inf {(Bt^{-1} w, w) : C w = v}`` for SPD ``Bt``."""
    Bt = as_sym(Bt).require_spd("Bt")
    return constrained_min_form(Bt.inverse(), C)


def constrained_inf(Bt, C, v):
    """Minimize ``(Bt^{-1} w, w)`` over the lifts ``C w = v``.

    The minimum is found by parametrizing the affine constraint set through
    an orthonormal basis of ``N(C)``; no closed form is used.

    Returns
    -------
    value : float
    minimizer : ndarray
    """
    Bt = as_sym(Bt).require_spd("Bt")
    C = _as_map(C).certify_surjective("C")
    v = _vector(v, C.rows)
    if Bt.dim != C.cols:
        raise DimensionError(f"Bt has dim {Bt.dim}, map has {C.cols} columns")
    G = Bt.inverse()
    w = _constrained_min(G, C, v)
    return float(w @ G @ w), w


# ---------------------------------------------------------------------------
# symmetric pencils


def _entries(M):
    return M.entries if isinstance(M, SymOperator) else np.asarray(M, dtype=float)


def pencil_eigenvalues(M, T, restrict=None) -> np.ndarray:
    """All eigenvalues (ascending) of ``(P^T M P, P^T T P)``.

    The pencil is reduced to a standard symmetric problem by congruence
    with the Cholesky factor of ``P^T T P``.
    """
    M, T = _entries(M), _entries(T)
    if M.shape != T.shape:
        raise DimensionError(f"pencil shapes differ: {M.shape} vs {T.shape}")
    if restrict is not None:
        P = restrict.basis if isinstance(restrict, Subspace) else np.asarray(restrict, float)
        M, T = P.T @ M @ P, P.T @ T @ P
    n = T.shape[0]
    if n == 0:
        return np.zeros(0)
    T = 0.5 * (T + T.T)
    try:
        L = sla.cholesky(T, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("T is not definite on the restriction") from exc
    d = np.diag(L) ** 2
    if d.min() <= n * EPS * d.max():
        raise NotSPDError("T is numerically singular on the restriction")
    X = sla.solve_triangular(L, 0.5 * (M + M.T), lower=True)
    C = sla.solve_triangular(L, X.T, lower=True)
    return sla.eigh(0.5 * (C + C.T), eigvals_only=True)


def pencil_extremes(M, T, restrict=None):
    """Smallest and largest eigenvalue of the restricted pencil ``(M, T)``."""
    w = pencil_eigenvalues(M, T, restrict)
    if w.size == 0:
        raise DimensionError("empty restriction")
    return float(w[0]), float(w[-1])


def _cholesky_definite(M) -> bool:
    """SPD test by Cholesky with a pivot floor; avoids a full eigensolve.

    The floor is far above roundoff so a semidefinite matrix whose
    factorization happens to succeed is still rejected; a false negative
    only costs a range-basis computation.
    """
    n = M.shape[0]
    try:
        L = sla.cholesky(M, lower=True)
    except np.linalg.LinAlgError:
        return False
    d = np.diag(L) ** 2
    return bool(n and d.min() > _PIVOT_FLOOR * n * EPS * max(1.0, d.max()))


def preconditioned_extremes(A, B, restrict=None):
    """Extreme eigenvalues of ``B A`` on a subspace (``R(A)`` by default).

    With ``A_r = P^T A P`` and ``B_r = P^T B P`` (``B`` symmetric and SPD on
    the subspace) the eigenvalues of ``B_r A_r`` are those of
    ``L^T A_r L`` where ``B_r = L L^T``.  This is the pencil
    ``(A_r B_r A_r, A_r)`` reduced by a different square root and is much
    cheaper at large dimension.
    """
    A = as_sym(A, "A")
    B = np.asarray(_entries(B), dtype=float)
    if restrict is None:
        P = None if _cholesky_definite(A.entries) else A.range_basis
    else:
        P = restrict.basis if isinstance(restrict, Subspace) else np.asarray(restrict, float)
    Ar, Br = (A.entries, B) if P is None else (P.T @ A.entries @ P, P.T @ B @ P)
    Br = 0.5 * (Br + Br.T)
    try:
        L = sla.cholesky(Br, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("B is not SPD on the subspace") from exc
    C = L.T @ Ar @ L
    w = sla.eigh(0.5 * (C + C.T), eigvals_only=True)
    return float(w[0]), float(w[-1])


# ---------------------------------------------------------------------------
# plain-text matrix files


def write_matrix(path, M):
    """Write ``rows cols`` followed by row-major entries at 17 significant digits."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing header")
    rows, cols = int(tokens[0]), int(tokens[1])
    data = tokens[2:]
    if len(data) != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, found {len(data)}")
    return np.array([float(x) for x in data]).reshape(rows, cols)
