"""Exception hierarchy shared by all modules."""


class SimAlignError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SimAlignError, ValueError):
    """An input violates a type invariant or a declared bound."""


class IngestionError(ValidationError):
    """Raw ratings reference unknown items or are otherwise unusable."""


class ParseError(ValidationError):
    """A data file could not be parsed.  Carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DimensionError(ValidationError):
    """Array shapes or feature dimensions disagree."""


class SingularSystemError(SimAlignError, ArithmeticError):
    """The unregularized normal equations are rank deficient."""


class ConvergenceError(SimAlignError, RuntimeError):
    """An iterative solver hit its iteration limit before converging."""

    def __init__(self, message, residual=None, n_iter=None):
        self.residual = residual
        self.n_iter = n_iter
        super().__init__(message)


class EmptyDesignError(ValidationError):
    """No regression rows remain after masking."""


class FoldError(ValidationError):
    """Fold generation produced an unusable split."""


class ZeroVarianceWarning(UserWarning):
    """A feature column is constant and was mapped to zeros."""
