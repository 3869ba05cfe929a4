"""Exception hierarchy. The CLI maps these onto exit codes."""


class DebiasError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DebiasError, ValueError):
    """Input violates a documented precondition or invariant (exit code 2)."""


class ParseError(ValidationError):
    """A tabular input could not be parsed."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NumericalError(DebiasError, ArithmeticError):
    """A numerical routine failed, e.g. training diverged (exit code 3)."""
