from __future__ import annotations


class ObfubenchError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ObfubenchError, ValueError):
    """Input data is malformed or inconsistent (CLI exit code 2)."""


class LexError(DataError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvariantError(ObfubenchError, RuntimeError):
    """An internal consistency check failed; indicates a defect (CLI exit code 3)."""
