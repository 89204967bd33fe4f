"""Exception hierarchy shared by all gpdrift modules."""


class GpDriftError(Exception):
    """Base class for library errors."""


class ParameterError(GpDriftError, ValueError):
    """A parameter lies outside its admissible domain."""


class UnsupportedParameterError(ParameterError):
    """The parameter is valid for the model but not for the requested operation."""


class PreconditionError(ParameterError):
    """An operation precondition from the estimation theory is violated."""


class SingularityError(GpDriftError, ValueError):
    """A kernel was evaluated on its diagonal singularity."""


class DegenerateCovarianceError(GpDriftError, ArithmeticError):
    """Cholesky factorization failed even after the jitter retry."""

    def __init__(self, message: str, smallest_pivot: float):
        super().__init__(f"{message} (smallest pivot {smallest_pivot:.3e})")
        self.smallest_pivot = smallest_pivot


class NonSolvableError(GpDriftError, ArithmeticError):
    """An Abel-type equation has no integrable solution on the grid (re-integration check failed)."""

    def __init__(self, message: str, residual: float, column: int | None = None):
        if column is not None:
            message = f"{message} [column {column}]"
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
        self.column = column


class SolverError(GpDriftError, ArithmeticError):
    """An iterative or discretized solver did not meet its acceptance checks."""


class AlignmentError(GpDriftError, ValueError):
    """Observation and quadrature grids are incompatible."""
