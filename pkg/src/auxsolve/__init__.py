"""Auxiliary-space and subspace-correction solvers for semi-SPD systems."""

from .errors import (
    AuxSolveError,
    BreakdownError,
    DimensionError,
    DivergentLocalSolverError,
    MeshError,
    NotSemiDefiniteError,
    NotSPDError,
    NotSurjectiveError,
    PreconditionError,
    SingularBlockError,
    ZeroOperatorError,
)
from .linalg import (
    LinearMap,
    Subspace,
    SymOperator,
    constrained_inf,
    operator_seminorm,
    pencil_extremes,
    range_null_split,
    seminorm,
)
from .iterative import (
    StationaryScheme,
    convergence_certificate,
    pcg_solve,
    run_stationary,
    step,
    symmetrize,
)
from .auxspace import (
    AuxSystem,
    RestrictedAux,
    compose,
    identity_eigs,
    identity_error_norm,
    lift_iterates,
    restrict_range,
)
from .subspace import (
    Decomposition,
    ExpandedSystem,
    block_lower_inverse,
    build_psc,
    build_ssc,
    lions_formula,
    xz_constants,
)

__version__ = "0.1.0"
