class SubvarError(Exception):
    """Base class for every error raised by the subvar packages."""


class GroundSetError(SubvarError, ValueError):
    """A mask, vector or element does not fit the ground set it is used with."""


class ProblemTooLargeError(SubvarError, ValueError):
    """An exhaustive (2^n) operation was asked for a ground set above its guard."""

    def __init__(self, operation: str, n: int, limit: int):
        super().__init__(f"{operation} enumerates all subsets; n={n} exceeds the limit of {limit}")
        self.operation = operation
        self.n = n
        self.limit = limit


class SolverError(SubvarError, RuntimeError):
    """Numerical failure inside a solver."""


class ModelFormatError(SubvarError, ValueError):
    """Malformed model, image, label map or CSV file."""
