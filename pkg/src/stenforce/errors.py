"""Exception types shared across the package."""


class StenforceError(Exception):
    """Base class for all package errors."""


class UsageError(StenforceError, ValueError):
    """A caller passed parameters outside an operation's contract."""


class DomainError(StenforceError, ArithmeticError):
    """A mathematically undefined request, e.g. inverting zero."""


class FormatError(StenforceError, ValueError):
    """Malformed input stream, token file or wire frame."""


class ProtocolError(StenforceError):
    """A protocol precondition was violated during an audit."""


class DecodingFailure(StenforceError):
    """No codeword lies within the error/erasure budget of the received word."""
