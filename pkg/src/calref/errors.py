"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ValidationError -> 2,
MethodCompatibilityError -> 3, NumericalError -> 4.
"""


class CalrefError(Exception):
    """Base class for all package errors."""


class ValidationError(CalrefError):
    """Malformed or out-of-contract input data."""


class DegenerateLabelsError(ValidationError):
    """Labels carry no usable signal (e.g. a single class for AUROC)."""


class MethodCompatibilityError(CalrefError):
    """Requested method cannot be applied to this data (e.g. isotonic, k>2)."""


class NumericalError(CalrefError):
    """A numerical procedure failed (non-convergence, pole in an integrand)."""


class ConvergenceError(NumericalError):
    """Iterative solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
