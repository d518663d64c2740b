"""Space decompositions and subspace correction.

A decomposition is an ordered list of pieces ``(Pi_j, R_j)`` with
``Pi_j : V_j -> V`` and ``R_j`` a local solver on ``V_j`` such that the
maps jointly cover ``V``.  Parallel subspace correction (PSC) adds the local
corrections, successive subspace correction (SSC) applies them one after
another.  Both are block relaxations of the expanded system
``[Pi_i^t A Pi_j]`` on the product space, which is what makes the error
identities computable by two routes.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .auxspace import AuxSystem, EigenIdentity, RestrictedAux, lifted_extremes
from .errors import (
    AuxSolveError,
    DimensionError,
    DivergentLocalSolverError,
    NotSPDError,
    SingularBlockError,
)
from .linalg import (
    EPS,
    LinearMap,
    Subspace,
    SymOperator,
    as_sym,
    constrained_inf,
    constrained_inf_form,
    constrained_min_form,
    operator_seminorm,
    pencil_extremes,
    read_matrix,
)

__all__ = [
    "Decomposition",
    "ExpandedSystem",
    "SSCResult",
    "XZConstants",
    "local_solver",
    "build_psc",
    "build_ssc",
    "block_lower_inverse",
    "assemble_blocks",
    "lions_formula",
    "psc_eigen_identity",
    "xz_constants",
    "xz_exact_constants",
    "coordinate_decomposition",
    "block_decomposition",
    "overlapping_blocks",
    "a_orthogonal_decomposition",
    "duplicated_decomposition",
    "random_decomposition",
    "load_decomposition",
]


def local_solver(A_j, kind="exact") -> np.ndarray:
    """Standard local solvers for a local operator ``A_j``.

    ``"exact"`` is the pseudo-inverse, ``"jacobi"`` the inverse diagonal.
    """
    A_j = as_sym(A_j, "A_j")
    if kind == "exact":
        return A_j.pseudo_inverse()
    if kind == "jacobi":
        d = np.diag(A_j.entries)
        if np.any(d <= 0.0):
            raise NotSPDError("Jacobi solver needs a positive diagonal")
        return np.diag(1.0 / d)
    raise ValueError(f"unknown local solver {kind!r}")


def _as_column_map(P, n):
    P = np.asarray(P.entries if isinstance(P, LinearMap) else P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2 or P.shape[0] != n:
        raise DimensionError(f"local map has shape {P.shape}, expected ({n}, k)")
    return P


class Decomposition:
    """Ordered pieces ``(Pi_j, R_j)`` covering ``V``.

    Parameters
    ----------
    A : SymOperator or array_like
        Semi-SPD operator on ``V``.
    pieces : sequence of (array_like, array_like or str)
        Local maps ``Pi_j`` (``dim V x dim V_j``) and local solvers, given
        either as matrices or as a name accepted by :func:`local_solver`.

    Attributes
    ----------
    locals : list of SymOperator
        ``A_j = Pi_j^t A Pi_j``.
    Qs : list of ndarray
        ``Q_j``, the range coordinates of ``A_j`` (``rank x dim V_j``).
    restricted : list of ndarray
        ``Q_j R_j Q_j^t``, the solvers acting on ``R(A_j)``.
    """

    def __init__(self, A, pieces):
        self.A = as_sym(A, "A").require_semi_spd("A")
        n = self.A.dim
        self.Pis, self.Rs, self.locals = [], [], []
        for j, (P, R) in enumerate(pieces):
            P = _as_column_map(P, n)
            A_j = SymOperator(P.T @ self.A.entries @ P)
            A_j.require_semi_spd(f"A_{j}")
            if isinstance(R, str):
                R = local_solver(A_j, R)
            R = np.array(R, dtype=float, ndmin=2)
            if R.shape != (P.shape[1], P.shape[1]):
                raise DimensionError(f"solver {j} has shape {R.shape}, piece has dim {P.shape[1]}")
            P.setflags(write=False)
            R.setflags(write=False)
            self.Pis.append(P)
            self.Rs.append(R)
            self.locals.append(A_j)
        if not self.Pis:
            raise DimensionError("empty decomposition")
        self.Pi = np.hstack(self.Pis)
        self.Pi.setflags(write=False)
        LinearMap(self.Pi, surjective=True)
        self.Qs = [A_j.range_basis.T for A_j in self.locals]
        self.restricted = [Q @ R @ Q.T for Q, R in zip(self.Qs, self.Rs)]

    def __repr__(self):
        return f"Decomposition(dim={self.A.dim}, J={self.J}, dims={self.dims})"

    @property
    def J(self) -> int:
        return len(self.Pis)

    @property
    def dims(self) -> list[int]:
        return [P.shape[1] for P in self.Pis]

    @property
    def ranks(self) -> list[int]:
        return [Q.shape[0] for Q in self.Qs]

    @property
    def R_tilde(self) -> np.ndarray:
        return sla.block_diag(*self.Rs)

    def reversed(self) -> "Decomposition":
        return Decomposition(self.A, list(zip(self.Pis, self.Rs))[::-1])

    def with_solvers(self, Rs) -> "Decomposition":
        return Decomposition(self.A, list(zip(self.Pis, Rs)))


class ExpandedSystem:
    """Block operators on the product space ``V_1 x ... x V_J``."""

    def __init__(self, d: Decomposition):
        self.decomposition = d
        A = d.A.entries
        self.A_blocks = [[Pi.T @ A @ Pj for Pj in d.Pis] for Pi in d.Pis]
        self.A_t = np.block(self.A_blocks)
        J = d.J
        zero = [[np.zeros((a, b)) for b in d.dims] for a in d.dims]
        self.D_t = sla.block_diag(*[self.A_blocks[j][j] for j in range(J)])
        self.L_t = np.block([[self.A_blocks[i][j] if i > j else zero[i][j]
                              for j in range(J)] for i in range(J)])
        self.R_t = d.R_tilde


def build_psc(d: Decomposition) -> np.ndarray:
    """``sum_j Pi_j R_j Pi_j^t``, checked against ``Pi Rt Pi^t``."""
    B = sum(P @ R @ P.T for P, R in zip(d.Pis, d.Rs))
    B2 = d.Pi @ d.R_tilde @ d.Pi.T
    scale = 1.0 + np.max(np.abs(B2))
    if np.max(np.abs(B - B2)) > 1e-12 * scale:
        raise AuxSolveError("additive preconditioner disagrees with its block form")
    return B


def _singular(M) -> bool:
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s[-1] <= M.shape[0] * EPS * s[0])


def block_lower_inverse(blocks, mode="substitution", diag_inverses=None):
    """Inverse of a block lower triangular operator, blockwise.

    Parameters
    ----------
    blocks : nested list
        ``blocks[i][j]`` for ``i >= j``; entries above the diagonal are
        ignored.  Diagonal blocks may be ``None`` when ``diag_inverses`` is
        given.
    mode : {"substitution", "formula"}
        Forward substitution, or the alternating sum over increasing index
        chains ``j = i_1 < ... < i_k = i`` of
        ``(-1)^(k-1) D_i^{-1} M_{i i_{k-1}} ... M_{i_2 j} D_j^{-1}``.
    diag_inverses : list of array_like, optional
        Inverses of the diagonal blocks.  Supplying them makes the inverse
        formal: the diagonal blocks themselves are never inverted, so the
        supplied operators may be singular.

    Returns
    -------
    list of list of ndarray
        The block lower triangular inverse.

    Raises
    ------
    SingularBlockError
        If a diagonal block has to be inverted and is singular.
    """
    J = len(blocks)
    if diag_inverses is None:
        Dinv = []
        for j in range(J):
            M = np.asarray(blocks[j][j], dtype=float)
            if M.shape[0] and _singular(M):
                raise SingularBlockError("singular diagonal block", j)
            Dinv.append(np.linalg.inv(M) if M.shape[0] else M)
    else:
        Dinv = [np.asarray(D, dtype=float) for D in diag_inverses]
        if len(Dinv) != J:
            raise DimensionError("one diagonal inverse per block row is required")
    sizes = [D.shape[0] for D in Dinv]
    X = [[np.zeros((sizes[i], sizes[j])) for j in range(J)] for i in range(J)]
    if mode == "substitution":
        for j in range(J):
            X[j][j] = Dinv[j]
            for i in range(j + 1, J):
                acc = np.zeros((sizes[i], sizes[j]))
                for k in range(j, i):
                    acc += np.asarray(blocks[i][k]) @ X[k][j]
                X[i][j] = -Dinv[i] @ acc
    elif mode == "formula":
        for j in range(J):
            X[j][j] = Dinv[j]
            for i in range(j + 1, J):
                acc = np.zeros((sizes[i], sizes[j]))
                between = range(j + 1, i)
                for r in range(i - j):
                    for mid in itertools.combinations(between, r):
                        chain = (j, *mid, i)
                        term = Dinv[j]
                        for a, b in zip(chain[:-1], chain[1:]):
                            term = Dinv[b] @ (np.asarray(blocks[b][a]) @ term)
                        acc += (-1) ** (len(chain) - 1) * term
                X[i][j] = acc
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return X


def assemble_blocks(X) -> np.ndarray:
    return np.block(X)


def _ssc_block_inverse(d: Decomposition, solvers, maps):
    """``(Rt^{-1} + Lt)^{-1}`` for the given solvers and local maps, formally."""
    A = d.A.entries
    J = len(maps)
    blocks = [[maps[i].T @ A @ maps[j] if i > j else None for j in range(J)]
              for i in range(J)]
    return assemble_blocks(block_lower_inverse(blocks, diag_inverses=solvers))


@dataclass(frozen=True)
class SSCResult:
    error_op: np.ndarray
    B_ssc: np.ndarray
    B_tilde: np.ndarray
    discrepancy: float


def build_ssc(d: Decomposition, reverse=False) -> SSCResult:
    """Successive subspace correction in list order (reverse order on request).

    ``error_op`` is ``(I - T_J) ... (I - T_1)`` with
    ``T_j = Pi_j R_j Pi_j^t A``.  ``B_ssc = Pi (Rt^{-1} + Lt)^{-1} Pi^t``
    with the block inverse taken formally, so singular ``R_j`` are allowed.
    ``discrepancy`` is the scaled max-norm of ``I - B_ssc A - error_op``.
    """
    if reverse:
        d = d.reversed()
    n = d.A.dim
    A = d.A.entries
    E = np.eye(n)
    for P, R in zip(d.Pis, d.Rs):
        E = E - P @ (R @ (P.T @ (A @ E)))
    Bt = _ssc_block_inverse(d, d.Rs, d.Pis)
    B = d.Pi @ Bt @ d.Pi.T
    diff = np.max(np.abs(np.eye(n) - B @ A - E))
    return SSCResult(E, B, Bt, float(diff / (1.0 + np.max(np.abs(E)))))


# ---------------------------------------------------------------------------
# identities on the range coordinates W = R(A_1) x ... x R(A_J)


def _range_maps(d: Decomposition):
    """``Pi_j Q_j^t`` for every piece and their concatenation."""
    maps = [P @ Q.T for P, Q in zip(d.Pis, d.Qs)]
    return maps, np.hstack(maps)


def _range_constraint(d: Decomposition):
    A = d.A
    Q = A.range_basis.T
    AQ = Q @ A.entries @ Q.T
    _, Pw = _range_maps(d)
    return Q, AQ, Q @ Pw


def _restricted_spd(d: Decomposition):
    Rs = []
    for j, R in enumerate(d.restricted):
        R = SymOperator(R)
        if R.dim and not R.is_spd:
            raise NotSPDError(f"restricted local solver {j} is not SPD")
        Rs.append(R.entries)
    return Rs


def lions_formula(d: Decomposition, v) -> float:
    """Least local energy needed to assemble ``v``.

    Evaluates the infimum, over ``phi`` in ``N(A)`` and ``v_j`` in
    ``R(A_j)`` with ``sum_j Pi_j v_j = v + phi``, of
    ``sum_j (R_j^{-1} v_j, v_j)`` as one constrained minimization on the
    range coordinates of the product space.  Only ``Q v`` matters.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (d.A.dim,):
        raise DimensionError(f"v has shape {v.shape}, expected ({d.A.dim},)")
    Rs = _restricted_spd(d)
    Q, _, C = _range_constraint(d)
    value, _ = constrained_inf(sla.block_diag(*Rs), C, Q @ v)
    return value


def psc_eigen_identity(d: Decomposition) -> EigenIdentity:
    """Extreme eigenvalues of ``B_PSC A`` on ``R(A)``, directly and via lifts."""
    Rs = _restricted_spd(d)
    Q, AQ, C = _range_constraint(d)
    B = build_psc(d)
    QA = Q @ d.A.entries
    lmin, lmax = pencil_extremes(QA @ (0.5 * (B + B.T)) @ QA.T, AQ)
    S, _ = constrained_inf_form(sla.block_diag(*Rs), C)
    smin, smax = pencil_extremes(S, AQ)
    return EigenIdentity(lmin, 1.0 / smax, lmax, 1.0 / smin)


@dataclass(frozen=True)
class XZConstants:
    """Constants of the successive subspace correction error identity.

    ``norm_sq_direct`` is ``|I - B_ssc A|_A^2`` from the product form,
    ``norm_sq_identity`` is ``1 - 1/c1``.  ``c1_displayed`` evaluates the
    ``c1`` functional written with the local solvers explicitly (available
    since every restricted solver is invertible under the hypothesis).
    """

    c0: float
    c1: float
    norm_sq_direct: float
    norm_sq_identity: float
    c1_displayed: float
    tol: float

    @property
    def residuals(self) -> dict:
        d, c0, c1 = self.norm_sq_direct, self.c0, self.c1
        return {
            "direct_vs_c1": abs(d - (1.0 - 1.0 / c1)) / (1.0 + abs(d)),
            "direct_vs_c0": abs(d - (1.0 - 1.0 / (1.0 + c0))) / (1.0 + abs(d)),
            "c1_vs_c0": abs(c1 - (1.0 + c0)) / abs(c1),
            "product_form": abs((1.0 - d) * c1 - 1.0),
            "c1_displayed": abs(self.c1_displayed - c1) / abs(c1),
        }

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())


def _symmetrized_local(d: Decomposition, index_map=None):
    """``(R_j, Rbar_j)`` on ``R(A_j)``; raises for a divergent local solver."""
    out = []
    for j, (R, A_j, Q) in enumerate(zip(d.restricted, d.locals, d.Qs)):
        Aq = Q @ A_j.entries @ Q.T
        Rbar = R + R.T - R.T @ Aq @ R
        if R.shape[0] and not SymOperator(Rbar).is_spd:
            idx = j if index_map is None else index_map[j]
            raise DivergentLocalSolverError("symmetrized local solver is not SPD on R(A_j)", idx)
        out.append((R, 0.5 * (Rbar + Rbar.T), Aq))
    return out


def xz_constants(d: Decomposition, reverse=False, tol=1e-8) -> XZConstants:
    """Both constants of the SSC error identity and the direct norm.

    ``c1`` is the supremum over ``|v|_A = 1`` of the joint infimum, over
    null shifts and range-coordinate lifts ``y``, of ``(Bbar_W^{-1} y, y)``
    where ``B_W = (R_W^{-1} + L_W)^{-1}`` is the block Gauss-Seidel
    operator of the expanded system restricted to ``R(A_1) x ... x R(A_J)``.
    ``c0`` is the supremum of the infimum of
    ``sum_i |R_i^t w_i|^2_{Rbar_i^{-1}}`` with
    ``w_i = A_i P_i sum_{j>=i} Pi_j v_j - R_i^{-1} v_i`` and
    ``A_i P_i = Q_i Pi_i^t A``.
    """
    J = d.J
    order = list(range(J))[::-1] if reverse else list(range(J))
    dd = d.reversed() if reverse else d
    local = _symmetrized_local(dd, order)
    ssc = build_ssc(dd)
    direct = operator_seminorm(ssc.error_op, dd.A) ** 2

    # c1 through the restricted expanded system
    maps, Pw = _range_maps(dd)
    ranks = dd.ranks
    B_W = _ssc_block_inverse(dd, [R for R, _, _ in local], maps)
    Qt = sla.block_diag(*dd.Qs)
    aux = AuxSystem(dd.A, dd.Pi, Bt=Qt.T @ B_W @ Qt)
    view = RestrictedAux(aux, Subspace(Qt.T, aux.aux_dim, check=False))
    c1 = lifted_extremes(aux, view, symmetrized=True)[1]

    # c0 through the explicit functional
    Q, AQ, C = _range_constraint(dd)
    A = dd.A.entries
    offs = np.concatenate([[0], np.cumsum(ranks)])
    m = offs[-1]
    G0 = np.zeros((m, m))
    G1 = np.zeros((m, m))
    for i, (R, Rbar, Aq) in enumerate(local):
        r = ranks[i]
        if r == 0:
            continue
        # P_i in Q_i coordinates: solve A_i P_i = Pi_i^t A on R(A_i)
        P_i = dd.Qs[i] @ dd.locals[i].pseudo_solve(dd.Pis[i].T @ A)
        AP = Aq @ P_i
        K = np.zeros((r, m))
        K[:, offs[i]:] = AP @ Pw[:, offs[i]:]
        Rinv = np.linalg.inv(R)
        K[:, offs[i]:offs[i + 1]] -= Rinv
        RK = R.T @ K
        G0 += RK.T @ np.linalg.solve(Rbar, RK)
        K1 = RK.copy()
        K1[:, offs[i]:offs[i + 1]] += Rbar @ Rinv
        G1 += K1.T @ np.linalg.solve(Rbar, K1)
    S0, _ = constrained_min_form(0.5 * (G0 + G0.T), C)
    c0 = max(0.0, pencil_extremes(S0, AQ)[1])
    S1, _ = constrained_min_form(0.5 * (G1 + G1.T), C)
    c1_disp = pencil_extremes(S1, AQ)[1]
    return XZConstants(c0, c1, direct, 1.0 - 1.0 / c1, c1_disp, tol)


def xz_exact_constants(d: Decomposition, reverse=False):
    """``(c0, c1)`` for exact local solvers from the projection form.

    With ``R_j = A_j^+`` the functionals reduce to
    ``sum_i |P_i sum_{j>i} Pi_j v_j|^2_{A_i}`` and
    ``sum_i |P_i sum_{j>=i} Pi_j v_j|^2_{A_i}``.
    """
    dd = d.reversed() if reverse else d
    for j, (R, A_j, Q) in enumerate(zip(dd.restricted, dd.locals, dd.Qs)):
        Aq = Q @ A_j.entries @ Q.T
        if R.shape[0] and not np.allclose(R @ Aq, np.eye(R.shape[0]), atol=1e-9):
            raise AuxSolveError(f"local solver {j} is not exact on R(A_j)")
    _, Pw = _range_maps(dd)
    Q, AQ, C = _range_constraint(dd)
    A = dd.A.entries
    ranks = dd.ranks
    offs = np.concatenate([[0], np.cumsum(ranks)])
    m = offs[-1]
    G0 = np.zeros((m, m))
    G1 = np.zeros((m, m))
    for i in range(dd.J):
        if ranks[i] == 0:
            continue
        Aq = dd.Qs[i] @ dd.locals[i].entries @ dd.Qs[i].T
        P_i = dd.Qs[i] @ dd.locals[i].pseudo_solve(dd.Pis[i].T @ A)
        M0 = np.zeros((ranks[i], m))
        M0[:, offs[i + 1]:] = P_i @ Pw[:, offs[i + 1]:]
        M1 = np.zeros((ranks[i], m))
        M1[:, offs[i]:] = P_i @ Pw[:, offs[i]:]
        G0 += M0.T @ Aq @ M0
        G1 += M1.T @ Aq @ M1
    S0, _ = constrained_min_form(0.5 * (G0 + G0.T), C)
    S1, _ = constrained_min_form(0.5 * (G1 + G1.T), C)
    return max(0.0, pencil_extremes(S0, AQ)[1]), pencil_extremes(S1, AQ)[1]


# ---------------------------------------------------------------------------
# decomposition generators


def block_decomposition(A, blocks, solver="exact") -> Decomposition:
    """Pieces spanned by coordinate index sets (possibly overlapping)."""
    n = as_sym(A).dim
    I = np.eye(n)
    return Decomposition(A, [(I[:, list(b)], solver) for b in blocks])


def coordinate_decomposition(A, solver="exact") -> Decomposition:
    """One-dimensional coordinate pieces; exact solvers give Jacobi / Gauss-Seidel."""
    return block_decomposition(A, [[i] for i in range(as_sym(A).dim)], solver)


def overlapping_blocks(A, n_blocks=2, overlap=1, solver="exact") -> Decomposition:
    """Contiguous index blocks extended by ``overlap`` indices on each side."""
    n = as_sym(A).dim
    if not 1 <= n_blocks <= n:
        raise DimensionError(f"cannot split {n} indices into {n_blocks} blocks")
    edges = np.linspace(0, n, n_blocks + 1).round().astype(int)
    blocks = [range(max(0, a - overlap), min(n, b + overlap))
              for a, b in zip(edges[:-1], edges[1:])]
    return block_decomposition(A, blocks, solver)


def a_orthogonal_decomposition(A, n_groups=2) -> Decomposition:
    """Groups of eigenvectors of ``A`` with exact solvers.

    Distinct groups are ``A``-orthogonal; null vectors join the last group.
    """
    A = as_sym(A)
    U = A.eigenvectors
    groups = np.array_split(np.arange(A.rank), n_groups)
    cols = [U[:, g] for g in groups if g.size]
    if A.rank < A.dim:
        cols[-1] = np.hstack([cols[-1], A.null_basis])
    return Decomposition(A, [(P, "exact") for P in cols])


def duplicated_decomposition(A, copies=2, solver="exact") -> Decomposition:
    """Every piece is the whole space."""
    n = as_sym(A).dim
    return Decomposition(A, [(np.eye(n), solver)] * copies)


def random_decomposition(seed, A, J, solver="exact") -> Decomposition:
    """Random coordinate blocks covering ``V``, with given or random solvers.

    ``solver="random"`` draws a convergent local solver for each piece.
    """
    from .generators import as_rng, convergent_preconditioner

    rng = as_rng(seed)
    A = as_sym(A)
    n = A.dim
    owner = np.concatenate([np.arange(J), rng.integers(0, J, max(0, n - J))])[:n]
    rng.shuffle(owner)
    blocks = []
    for j in range(J):
        b = set(np.flatnonzero(owner == j))
        b |= set(rng.choice(n, size=rng.integers(0, 3), replace=False))
        if not b:
            b = {int(rng.integers(n))}
        blocks.append(sorted(int(i) for i in b))
    if solver != "random":
        return block_decomposition(A, blocks, solver)
    I = np.eye(n)
    pieces = []
    for b in blocks:
        P = I[:, b]
        pieces.append((P, convergent_preconditioner(rng, P.T @ A.entries @ P)))
    return Decomposition(A, pieces)


def load_decomposition(path) -> Decomposition:
    """Read ``{"matrix": path, "pieces": [{"pi": path, "solver": ...}]}``.

    Relative paths are resolved against the directory of the JSON file;
    ``solver`` is ``"exact"``, ``"jacobi"`` or a matrix file.
    """
    path = Path(path)
    desc = json.loads(path.read_text())
    base = path.parent
    A = read_matrix(base / desc["matrix"])
    pieces = []
    for item in desc["pieces"]:
        P = read_matrix(base / item["pi"])
        solver = item.get("solver", "exact")
        if solver not in ("exact", "jacobi"):
            solver = read_matrix(base / solver)
        pieces.append((P, solver))
    return Decomposition(A, pieces)
