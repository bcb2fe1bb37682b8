"""Centralized logging configuration for lambda-ea."""

from __future__ import annotations

import logging
import os
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from lambdaea.priors import ClassPriors

ROOT_LOGGER = "lambdaea"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def stream_supports_colour(stream: Any) -> bool:
    """Check if the given stream understands ANSI colour codes."""
    is_a_tty = hasattr(stream, "isatty") and stream.isatty()
    if sys.platform != "win32":
        return is_a_tty

    # Windows Terminal, ConEmu/ANSICON and the VSCode terminal render ANSI
    return is_a_tty and (
        "ANSICON" in os.environ
        or "WT_SESSION" in os.environ
        or os.environ.get("TERM_PROGRAM") == "vscode"
    )


class _ColourFormatter(logging.Formatter):
    """Terminal formatter: grey timestamp, coloured level, magenta logger name."""

    # \x1b[<codes>m; 3x foreground, 4x background, 9x bright, 1 bold, 0 reset
    LEVEL_COLOURS = (
        (logging.DEBUG, "\x1b[36;1m"),
        (logging.INFO, "\x1b[34;1m"),
        (logging.WARNING, "\x1b[33;1m"),
        (logging.ERROR, "\x1b[31;1m"),
        (logging.CRITICAL, "\x1b[41m"),
    )

    FORMATS = {
        level: logging.Formatter(
            f"\x1b[90m%(asctime)s\x1b[0m {colour}%(levelname)-8s\x1b[0m \x1b[35m%(name)s\x1b[0m %(message)s",
            DATE_FORMAT,
        )
        for level, colour in LEVEL_COLOURS
    }

    def format(self, record: logging.LogRecord) -> str:
        formatter = self.FORMATS.get(record.levelno, self.FORMATS[logging.DEBUG])

        if record.exc_info:
            text = formatter.formatException(record.exc_info)
            record.exc_text = f"\x1b[31m{text}\x1b[0m"

        output = formatter.format(record)
        record.exc_text = None
        return output


def get_logger(name: str) -> logging.Logger:
    """Get the package logger for a module.

    Args:
        name: Short module name, e.g. ``"ipule"``

    Returns:
        The ``lambdaea.<name>`` logger
    """
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")


def configure_logging(
    level: int = logging.INFO,
    format_string: str | None = None,
    handler: logging.Handler | None = None,
    use_colors: bool | None = None,
) -> None:
    """Configure the ``lambdaea`` logger hierarchy.

    Args:
        level: The logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        format_string: Custom ``{``-style format (ignored when colours are used)
        handler: Custom handler, defaults to a stderr StreamHandler
        use_colors: Force colours on/off. If None, auto-detects terminal support
    """
    if handler is None:
        handler = logging.StreamHandler(sys.stderr)

    if use_colors is None:
        stream = getattr(handler, "stream", None)
        use_colors = stream is not None and stream_supports_colour(stream)

    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(level)

    for existing_handler in logger.handlers[:]:
        logger.removeHandler(existing_handler)

    if use_colors:
        formatter: logging.Formatter = _ColourFormatter()
    else:
        if format_string is None:
            format_string = "[{asctime}] [{levelname:<8}] {name}: {message}"
        formatter = logging.Formatter(format_string, DATE_FORMAT, style="{")

    handler.setFormatter(formatter)
    logger.addHandler(handler)
    logger.propagate = False


def log_performance(logger: logging.Logger, operation: str, duration: float) -> None:
    """Log how long an operation took, at INFO level.

    Args:
        logger: The logger instance
        operation: Description of the operation
        duration: Duration in seconds
    """
    logger.info("Operation '%s' completed in %.3f seconds", operation, duration)


def log_epoch(
    logger: logging.Logger,
    kind: str,
    step: int,
    loss: float,
    priors: ClassPriors | None = None,
) -> None:
    """Log one training epoch at DEBUG level."""
    if not logger.isEnabledFor(logging.DEBUG):
        return
    if priors is None:
        logger.debug("[%s %d] loss=%.6f", kind, step, loss)
    else:
        logger.debug(
            "[%s %d] loss=%.6f pi_p=%.4f pi_p_u=%.4f alpha=%.4f",
            kind,
            step,
            loss,
            priors.pi_p,
            priors.pi_p_u,
            priors.alpha,
        )


def log_artifact(logger: logging.Logger, kind: str, path: Path | str) -> None:
    """Log that an output file was written."""
    logger.info("Wrote %s: %s", kind, path)
