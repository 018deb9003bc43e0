"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class CdtreeError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CdtreeError):
    """A file or model response could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(CdtreeError):
    """An invariant of the data model was violated."""


class EditError(ValidationError):
    """A tree edit was rejected because it would break an invariant."""


class TransportError(CdtreeError):
    """An upstream model endpoint failed after bounded retries."""


class ExtractionError(CdtreeError):
    """A model response did not match the expected output contract."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw
