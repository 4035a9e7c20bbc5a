"""Exception types shared by the numerical modules."""


class TailProbError(Exception):
    """Base class for every error raised by the library."""


class GridError(TailProbError):
    """Invalid grid specification (node counts, bounds)."""


class FieldError(TailProbError):
    """Invalid nodal field (non-finite values, bad parameters)."""


class FieldMismatchError(FieldError):
    """Field does not live on the grid it is used with."""


class CovarianceError(TailProbError):
    """Covariance matrix could not be factorized or is indefinite."""


class CoefficientError(TailProbError):
    """Elliptic coefficient is not strictly positive."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


class SolverError(TailProbError):
    """Linear solve failed or missed its residual tolerance."""
