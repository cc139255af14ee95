"""Exception types shared across the package."""


class LiftsegError(Exception):
    """Base class for all liftseg errors."""


class ValidationError(LiftsegError):
    """Invalid input data, configuration, or file contents (CLI exit 2)."""


class NumericalError(LiftsegError):
    """Non-finite values encountered during iteration (CLI exit 3)."""
