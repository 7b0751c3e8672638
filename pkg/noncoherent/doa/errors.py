"""noncoherent-doa errors."""

from typing import Dict, Optional, Type

from pydantic import ValidationError


class DoaError(Exception):
    """Base exception class."""


class ArgumentError(DoaError, ValueError):
    """Invalid argument, shape or pre-condition."""


class UnsupportedConfigurationError(DoaError):
    """Configuration outside of what an estimator supports."""


class UsageError(DoaError):
    """Command line usage error."""


class NumericFailureError(DoaError, ArithmeticError):
    """Non-finite values in an iterative solver."""

    def __init__(
        self, message: str, iteration: Optional[int] = None, stage: str = ""
    ) -> None:
        """Store failing iteration and solver stage."""
        super().__init__(message)
        self.iteration = iteration
        self.stage = stage


EXIT_CODES: Dict[Type[Exception], int] = {
    UsageError: 1,
    ArgumentError: 1,
    UnsupportedConfigurationError: 1,
    ValidationError: 1,
    NumericFailureError: 2,
    OSError: 3,
}


def exit_code(exc: Exception) -> int:
    """Return the process exit code for an exception."""
    for exc_type, code in EXIT_CODES.items():
        if isinstance(exc, exc_type):
            return code

    raise exc
