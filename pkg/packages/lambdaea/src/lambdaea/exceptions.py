"""Custom exceptions for lambda-ea."""

from __future__ import annotations

from pathlib import Path

from lambdaea.logging import get_logger


class LambdaError(Exception):
    """Base exception for all lambda-ea errors."""

    def __init__(self, message: str) -> None:
        super().__init__(message)
        logger = get_logger("exceptions")
        logger.error("LambdaError: %s", message)


class DataFormatError(LambdaError):
    """Raised when an input file line cannot be parsed."""

    def __init__(self, path: Path | str, line: int, message: str) -> None:
        self.path = Path(path)
        self.line = line
        super().__init__(f"Data Format Error: {path}:{line}: {message}")


class ValidationError(LambdaError):
    """Raised when a domain object or call violates its preconditions."""

    def __init__(self, message: str) -> None:
        super().__init__(f"Validation Error: {message}")


class ConfigurationError(LambdaError):
    """Raised when there are configuration issues."""

    def __init__(self, message: str) -> None:
        super().__init__(f"Configuration Error: {message}")


class TrainingError(LambdaError):
    """Raised when optimization produces a non-finite objective."""

    def __init__(self, message: str) -> None:
        super().__init__(f"Training Error: {message}")


class SerializationError(LambdaError):
    """Raised when checkpoints or reports cannot be read or written."""

    def __init__(self, message: str) -> None:
        super().__init__(f"Serialization Error: {message}")


class NotAlignableError(LambdaError):
    """Raised when alignment is requested for a pair judged not alignable."""

    def __init__(self, pi_p_u: float, tau_align: float) -> None:
        self.pi_p_u = pi_p_u
        self.tau_align = tau_align
        super().__init__(
            f"Not Alignable: estimated unlabeled matchable prior {pi_p_u:.4f} "
            f"is below tau_align={tau_align:.4f}"
        )
