class KinesimError(Exception):
    """Base class for all package errors."""


class DomainError(KinesimError, ValueError):
    """Argument outside the domain of a physical formula."""


class TraceFormatError(KinesimError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TraceOrderError(TraceFormatError):
    """Timestamps in a trace are not strictly increasing."""


class InsufficientDataError(KinesimError):
    pass


class ConfigError(KinesimError):
    """Invalid or incomplete run configuration."""


class InfeasibleError(KinesimError):
    """A sizing problem has no solution on the candidate grid."""
