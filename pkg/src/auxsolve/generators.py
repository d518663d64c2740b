"""Test matrices and seeded random instances.

All random generators take a ``numpy.random.Generator`` (or an integer
seed) so that every instance is reproducible.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .auxspace import AuxSystem
from .errors import DimensionError, NotSPDError
from .linalg import LinearMap, SymOperator, as_sym

__all__ = [
    "as_rng",
    "tridiag",
    "neumann_laplacian",
    "random_spd",
    "random_semi_spd",
    "random_surjective",
    "convergent_preconditioner",
    "random_aux_system",
]

MAX_RETRIES = 20


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def tridiag(n, lower=-1.0, diag=2.0, upper=None) -> np.ndarray:
    """Constant tridiagonal matrix, ``tridiag(-1, 2, -1)`` by default."""
    if n < 1:
        raise DimensionError("n must be positive")
    upper = lower if upper is None else upper
    return (np.diag(np.full(n, float(diag)))
            + np.diag(np.full(n - 1, float(lower)), -1)
            + np.diag(np.full(n - 1, float(upper)), 1))


def neumann_laplacian(n) -> np.ndarray:
    """Graph Laplacian of a path with ``n`` nodes; its kernel is the constants."""
    if n < 2:
        raise DimensionError("need at least two nodes")
    A = tridiag(n)
    A[0, 0] = A[-1, -1] = 1.0
    return A


def random_spd(seed, n, shift=0.1) -> np.ndarray:
    """``G^t G / n + shift I`` with standard normal ``G``."""
    rng = as_rng(seed)
    G = rng.standard_normal((n, n))
    A = G.T @ G / n + shift * np.eye(n)
    return 0.5 * (A + A.T)


def random_semi_spd(seed, n, null_dim=1, shift=0.1) -> np.ndarray:
    """Random semi-SPD matrix whose ``null_dim`` smallest directions are removed.

    The spectrum of a random SPD matrix is computed and its ``null_dim``
    smallest eigenvalues are set to zero, so the kernel is known exactly up
    to roundoff in the reconstruction.
    """
    if not 0 <= null_dim < n:
        raise DimensionError(f"null_dim must lie in [0, {n})")
    w, U = np.linalg.eigh(random_spd(seed, n, shift))
    w[:null_dim] = 0.0
    A = (U * w) @ U.T
    return 0.5 * (A + A.T)


def random_surjective(seed, rows, cols) -> np.ndarray:
    """Standard normal ``rows x cols`` map, certified to have full row rank."""
    if rows > cols:
        raise DimensionError("a surjective map needs rows <= cols")
    rng = as_rng(seed)
    for _ in range(MAX_RETRIES):
        P = rng.standard_normal((rows, cols))
        if LinearMap(P).is_surjective():
            return P
    raise RuntimeError("could not draw a surjective map")


def convergent_preconditioner(seed, A, symmetric=True, margin=(0.2, 1.8)) -> np.ndarray:
    """``B = omega M^{-1}`` with random ``M`` and ``Bbar`` SPD.

    ``M`` is a random SPD matrix, plus a random skew part when
    ``symmetric`` is false.  With ``B^{-1} = M / omega`` the symmetrization
    is ``B^t (M / omega + M^t / omega - A) B``; it is SPD whenever
    ``omega lambda_max(A, M_sym) < 2``.  ``omega lambda_max`` is drawn from
    ``margin`` and the result is accepted once the symmetrization passes a
    definiteness check.
    """
    rng = as_rng(seed)
    A = as_sym(A, "A")
    n = A.dim
    for _ in range(MAX_RETRIES):
        M = random_spd(rng, n, shift=0.5)
        if not symmetric:
            K = rng.standard_normal((n, n))
            M = M + 0.3 * (K - K.T)
        Ms = 0.5 * (M + M.T)
        # largest omega with 2 Ms / omega - A SPD
        lam = sla.eigh(A.entries, Ms, eigvals_only=True)[-1]
        omega = rng.uniform(*margin) / max(lam, 1e-300)
        B = omega * np.linalg.inv(M)
        Bbar = SymOperator(B + B.T - B.T @ A.entries @ B)
        if Bbar.is_spd:
            return B
    raise NotSPDError("no convergent preconditioner found within the retry budget")


def random_aux_system(seed, dim, aux_dim, null_dim=0, symmetric=True) -> AuxSystem:
    """Random ``(A, Pi, Bt)`` with ``Bbar`` SPD on the auxiliary space."""
    rng = as_rng(seed)
    A = random_semi_spd(rng, dim, null_dim) if null_dim else random_spd(rng, dim)
    Pi = random_surjective(rng, dim, aux_dim)
    At = Pi.T @ A @ Pi
    Bt = convergent_preconditioner(rng, At, symmetric=symmetric)
    return AuxSystem(A, Pi, Bt)
