"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class UnsupportedError(ValueError):
    """The operation is defined but not supported for these arguments (e.g. kappa = 0)."""


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap.

    The best iterate found so far is attached as ``best`` so callers can
    still inspect or use it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class StagnationError(ConvergenceError):
    """Line search could not find a step satisfying sufficient decrease."""


class ParseError(ValueError):
    """Malformed input file; ``row`` and ``column`` locate the problem (1-based)."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column
