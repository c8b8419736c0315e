"""Exception hierarchy."""


class ForcingSetError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ForcingSetError, ValueError):
    pass


class EmptyDatasetError(ForcingSetError, ValueError):
    pass


class NumericalError(ForcingSetError, ArithmeticError):
    """A linear solve or iteration produced non-finite or unusable values."""


class SingularSystemError(NumericalError):
    pass


class DegenerateConstraintError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, grad_norm):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


class StaleClaimError(ForcingSetError, ValueError):
    pass


class DataFormatError(ForcingSetError, ValueError):
    """Malformed input file; ``row`` is the 1-based data row when known."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row
