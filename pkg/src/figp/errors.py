"""Exception types shared across the package."""


class FigpError(Exception):
    """Base class for all package-specific errors."""


class ExpressionError(FigpError):
    """Raised on a malformed or unevaluable expression.

    Carries the byte offset of the offending token when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class GridMismatchError(FigpError):
    """Raised when two functional inputs live on different grids."""


class GramFactorizationError(FigpError):
    """Raised when a Gram matrix cannot be Cholesky-factorized.

    With the automatic nugget policy this signals degenerate inputs
    (duplicates, or linear dependence under the linear kernel).
    """


class FitError(FigpError):
    """Raised when hyperparameter estimation fails for every start."""
