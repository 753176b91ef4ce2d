"""Exception hierarchy. The CLI maps these onto exit codes."""

from __future__ import annotations


class MisinfoError(Exception):
    """Base class for all pipeline errors."""


class DataError(MisinfoError, ValueError):
    """Malformed input file or violated data precondition."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


class ConfigError(MisinfoError, ValueError):
    """Invalid configuration or hyperparameters."""


class TrainingError(MisinfoError, RuntimeError):
    """Training diverged or a solver gave up before converging."""


class UsageError(MisinfoError):
    """Bad command-line usage (unknown kind, missing path, ...)."""
