"""Logging setup: rich console output plus an optional per-run log file."""

import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

LOGGER_NAME = "s2sreid"
FILE_FORMAT = "%(asctime)s.%(msecs)03d [%(name)-15s] %(levelname)-7s %(message)s"


def log_dir() -> Path:
    """Directory for run logs: ``$XDG_DATA_HOME/s2sreid/logs`` (``~/.local/share`` if unset)."""
    data_home = os.environ.get("XDG_DATA_HOME") or str(Path.home() / ".local" / "share")
    return Path(data_home) / LOGGER_NAME / "logs"


def run_log_path(command: str, now: Optional[datetime] = None) -> Path:
    """
    A fresh log file for one command run, e.g. ``s2sreid-train-20261019-141503.log``.

    Runs started within the same second get a numeric suffix.
    """
    directory = log_dir()
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{LOGGER_NAME}-{command}-{now or datetime.now():%Y%m%d-%H%M%S}"
    path = directory / f"{stem}.log"
    suffix = 1
    while path.exists():
        path = directory / f"{stem}-{suffix}.log"
        suffix += 1
    return path


def setup_logging(
    level: int = logging.INFO,
    log_file: Optional[Path] = None,
    console: Optional[Console] = None,
) -> logging.Logger:
    """
    Configure the package logger.

    Replaces any handlers installed by an earlier call, so commands can be
    invoked repeatedly in one process (tests do this).

    Args:
        level: Console log level
        log_file: Plain-text run log; ``None`` disables file logging
        console: Rich console to write to (stderr by default)

    Returns:
        The configured ``s2sreid`` logger
    """
    logger = logging.getLogger(LOGGER_NAME)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    rich_handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=False,
        log_time_format="%H:%M:%S",
    )
    rich_handler.setLevel(level)
    logger.addHandler(rich_handler)

    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt="%H:%M:%S"))
        logger.addHandler(file_handler)
        logger.setLevel(logging.DEBUG)
    else:
        logger.setLevel(level)

    logger.propagate = False
    return logger
