"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (factorisation, non-convergence, overflow)."""


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorisation hit a nonpositive pivot.

    ``index`` is the offending row/column in the original ordering,
    ``elimination_step`` its position in the factorisation sequence.
    """

    def __init__(self, index, elimination_step):
        self.index = int(index)
        self.elimination_step = int(elimination_step)
        super().__init__(
            f"matrix not positive definite: pivot at index {self.index} "
            f"(elimination step {self.elimination_step})"
        )


class FileFormatError(ValueError):
    """An input file failed to parse; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshFormatError(FileFormatError):
    """A mesh file failed to parse."""
