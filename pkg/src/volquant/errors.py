"""Exception types shared across the package.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``SolverError`` -> 3.
"""


class DataError(ValueError):
    """Malformed, misaligned or insufficient input data."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SolverError(RuntimeError):
    """The quantile regression could not be solved."""


class RankDeficiencyError(SolverError):
    """Design matrix does not have full column rank."""

    def __init__(self, column):
        super().__init__(f"design matrix is rank deficient: column {column!r} "
                         "is collinear with the preceding columns")
        self.column = column
