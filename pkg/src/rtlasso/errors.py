"""Exception types raised across the package."""


class RTLError(Exception):
    """Base class for all package errors."""


class ValidationError(RTLError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    def __init__(self, dataset_id, expected, got):
        self.dataset_id = dataset_id
        self.expected = expected
        self.got = got
        super().__init__(
            f"dataset {dataset_id!r} has {got} columns, expected {expected}")


class ZeroVarianceColumn(ValidationError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} has zero variance")


class InvalidDesign(ValidationError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvalidConfig(ValidationError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class EmptySelection(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class BadFoldCount(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class ZeroTruth(ValidationError):
    pass


class DegenerateResiduals(RTLError):
    pass


class IngestionError(RTLError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class NotConverged(RTLError):
    """Solver hit ``max_iters`` before the KKT residual dropped below ``tol``.

    The best iterate is kept on the exception so callers can decide whether
    it is good enough.
    """

    def __init__(self, max_iters, kkt, beta, e=None):
        self.max_iters = max_iters
        self.kkt = kkt
        self.beta = beta
        self.e = e
        super().__init__(
            f"no convergence after {max_iters} sweeps (KKT residual {kkt:.3e})")


class StageError(RTLError):
    """Wraps a failure inside a pipeline stage, tagging which one."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
