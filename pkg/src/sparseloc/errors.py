"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """Malformed input data: bad header, truncated payload, unparsable row."""


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its iteration budget.

    The partial result is attached as ``estimate`` so callers can inspect
    or reuse it.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class NumericalError(RuntimeError):
    """A numerical invariant was violated (objective increase, non-finite value)."""
