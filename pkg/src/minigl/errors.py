"""Exception types shared across minigl."""


class MiniGLError(Exception):
    """Base class for all minigl errors."""


class ValidationError(MiniGLError):
    """Bad argument or input value (maps to CLI exit code 2)."""


class ParseError(ValidationError):
    """Malformed text input; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class FormatError(MiniGLError):
    """Corrupt or unrecognized binary file."""


class NotFoundError(MiniGLError):
    """ID absent from a mapping table."""


class CapacityError(MiniGLError):
    """Hash table ran out of slots (internal error)."""


class ConfigError(MiniGLError):
    """Invalid tile or worker configuration."""
