"""Exception types shared across the package."""


class CdeError(Exception):
    """Base class for all cdefit errors."""


class DataError(CdeError, ValueError):
    """Invalid or unusable input data."""


class ParseError(DataError):
    """CSV parsing failure; carries the 1-based data row where it occurred."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DegenerateDomainError(DataError):
    """All responses identical: the data span no interval."""


class DivergenceError(CdeError, RuntimeError):
    """Solver iterates diverging (e.g. separated logistic regression)."""


class NonConvergenceError(CdeError, RuntimeError):
    """Solver failed to converge; carries the last iterate and diagnostics."""

    def __init__(self, message, theta=None, diagnostics=None):
        super().__init__(message)
        self.theta = theta
        self.diagnostics = diagnostics or {}


class EmptySubsampleError(CdeError, RuntimeError):
    """Acceptance sampling rejected every row; change the pilot or seed."""


class SchemaError(CdeError, ValueError):
    """Serialized artifact has an unsupported schema version."""


class InternalAssertionError(CdeError, AssertionError):
    """An internal invariant was violated; indicates a bug, not bad data."""
