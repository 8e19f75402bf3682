"""Exception types shared across the package."""


class PMWLSError(Exception):
    """Base class for all package errors."""


class ValidationError(PMWLSError, ValueError):
    """Malformed input: bad shapes, out-of-range parameters, unreadable files."""


class NumericalError(PMWLSError, ArithmeticError):
    """A computation produced non-finite values or could not proceed."""
