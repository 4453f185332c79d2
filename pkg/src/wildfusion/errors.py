"""Exception hierarchy shared across the package."""


class WildFusionError(Exception):
    """Base class for all package errors."""


class InputError(WildFusionError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(WildFusionError, ValueError):
    """A configuration value is unknown, malformed or out of its domain."""


class FormatError(WildFusionError, ValueError):
    """A persisted file is truncated, corrupt or of the wrong kind."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class LabelValidationError(FormatError):
    """A stored label record breaks a QuerySample invariant."""

    def __init__(self, message, offset=None, index=None):
        if index is not None:
            message = f"sample {index}: {message}"
        super().__init__(message, offset)
        self.index = index


class NumericError(WildFusionError, ArithmeticError):
    """A numerical procedure diverged (non-finite loss or values)."""
