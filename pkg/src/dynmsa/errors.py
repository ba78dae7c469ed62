"""Exception types shared across the package."""


class DynmsaError(Exception):
    """Base class for all package errors."""


class ParseError(DynmsaError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(DynmsaError):
    """Input data violates a documented precondition."""
