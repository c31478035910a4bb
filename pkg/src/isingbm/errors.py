"""Exception types shared across the package."""


class IsingError(Exception):
    """Base class for package-specific errors."""


class CapacityError(IsingError):
    """State space or request size exceeds a configured limit."""


class TransportError(IsingError):
    """Network-level failure talking to a remote sampler; safe to retry."""


class ProtocolError(IsingError):
    """Remote sampler replied with something the wire protocol does not allow."""


class DatasetFormatError(IsingError):
    """Malformed dataset file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
