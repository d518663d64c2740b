"""Exception hierarchy shared across the package."""


class AuxSolveError(Exception):
    """Base class for all errors raised by ``auxsolve``."""


class DimensionError(AuxSolveError, ValueError):
    """Operands have incompatible shapes."""


class NotSemiDefiniteError(AuxSolveError):
    """An operator expected to be semi-SPD has a negative eigenvalue."""


class NotSPDError(AuxSolveError):
    """An operator expected to be SPD (possibly on a subspace) is not."""


class NotSurjectiveError(AuxSolveError):
    """A linear map expected to be onto has deficient row rank."""


class PreconditionError(AuxSolveError):
    """A mathematical precondition of an operation does not hold."""


class ZeroOperatorError(AuxSolveError):
    """The operator vanishes identically, so its range is trivial."""


class BreakdownError(AuxSolveError):
    """An iterative method could not continue.

    Attributes
    ----------
    iteration : int
        Index of the iteration at which the breakdown was detected.
    """

    def __init__(self, msg, iteration):
        super().__init__(f"{msg} (iteration {iteration})")
        self.iteration = iteration


class DivergentLocalSolverError(AuxSolveError):
    """A local solver whose symmetrization is not SPD on its space."""

    def __init__(self, msg, index):
        super().__init__(f"{msg} (piece {index})")
        self.index = index


class SingularBlockError(AuxSolveError):
    """A diagonal block of a block triangular operator is singular."""

    def __init__(self, msg, index):
        super().__init__(f"{msg} (block {index})")
        self.index = index


class MeshError(AuxSolveError):
    """Invalid or unreadable mesh data."""
