"""Error types shared across the package.

Every error carries a short machine-readable ``code`` next to the human
message; the HTTP layer and the CLI map codes to status codes / exit codes.
"""

from __future__ import annotations


class AnnoflowError(Exception):
    """Base class: a coded error."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ProtocolParseError(AnnoflowError):
    """Protocol source is structurally malformed. Carries the offending position."""

    def __init__(self, code: str, message: str, line: int = 0, col: int = 0):
        super().__init__(code, message)
        self.line = line
        self.col = col

    def __str__(self) -> str:
        return f"{self.code}: {self.message} ({self.line}:{self.col})"


class ProtocolInvalidError(AnnoflowError):
    """Compilation was requested for a protocol whose validation report has errors."""

    def __init__(self, report):
        super().__init__("protocol-invalid", "protocol has validation errors")
        self.report = report


class EngineError(AnnoflowError):
    """A session operation was rejected; the session is left unchanged."""


class StoreError(AnnoflowError):
    """A datastore operation was rejected; the store is left unchanged."""
