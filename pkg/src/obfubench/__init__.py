"""Robustness benchmarking of design-pattern detectors under name obfuscation."""

from obfubench.errors import DataError, InvariantError, LexError, ObfubenchError

__version__ = "0.1.0"

__all__ = ["DataError", "InvariantError", "LexError", "ObfubenchError", "__version__"]
