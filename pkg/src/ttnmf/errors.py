"""Exception types shared across the package."""


class TtnmfError(Exception):
    """Base class for package errors."""


class ConfigError(TtnmfError, ValueError):
    """Invalid configuration value (bad rank, lag set, split point, ...)."""


class ShapeError(TtnmfError, ValueError):
    """Matrix dimensions do not line up."""


class ParseError(TtnmfError, ValueError):
    """A data file could not be parsed."""


class ValidationError(TtnmfError, ValueError):
    """Parsed data violates a domain constraint (negative flow, non-binary routing)."""


class UsageError(TtnmfError, ValueError):
    """Bad command-line or API usage."""


class NumericalFailure(TtnmfError, RuntimeError):
    """Training or estimation produced a non-finite iterate."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot if snapshot is not None else {}
