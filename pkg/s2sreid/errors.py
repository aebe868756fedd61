"""Exception hierarchy shared by every s2sreid component.

Each class carries the exit code the CLI returns when it escapes a command.
"""

from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union


class S2SError(Exception):
    """Base class for all s2sreid errors."""

    exit_code = 1


class VerificationError(S2SError):
    """A verification harness (gradient check, oracle) found a mismatch."""

    exit_code = 1

    def __init__(self, message: str, term: Optional[str] = None) -> None:
        super().__init__(message)
        self.term = term


class ConfigurationError(S2SError, ValueError):
    """Invalid configuration, network layout or input shape."""

    exit_code = 2

    def __init__(self, message: str, layer: Optional[str] = None) -> None:
        if layer is not None:
            message = f"layer '{layer}': {message}"
        super().__init__(message)
        self.layer = layer


class UsageError(S2SError, ValueError):
    """A documented precondition was violated by the caller."""

    exit_code = 2


class DataError(S2SError):
    """The data on disk or in memory cannot satisfy the request."""

    exit_code = 3


@contextmanager
def reading(path: Union[str, Path]) -> Iterator[None]:
    """Re-raise an OSError from reading ``path`` as a DataError naming the file."""
    try:
        yield
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror or e}") from e


class ParseError(DataError):
    """A text file (manifest, config) contains a malformed line."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None) -> None:
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where = f"{where}{line}: " if where else f"line {line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class FormatError(DataError):
    """A binary file has the wrong magic, version or length."""


class GenerationError(DataError):
    """A synthetic dataset cannot be generated with the requested settings."""


class NumericalError(S2SError, ArithmeticError):
    """A loss or gradient became non-finite."""

    exit_code = 4

    def __init__(
        self,
        message: str,
        iteration: Optional[int] = None,
        term: Optional[str] = None,
        index: Optional[int] = None,
    ) -> None:
        parts = []
        if iteration is not None:
            parts.append(f"iteration {iteration}")
        if term is not None:
            parts.append(f"term '{term}'")
        if index is not None:
            parts.append(f"index {index}")
        if parts:
            message = f"{message} ({', '.join(parts)})"
        super().__init__(message)
        self.iteration = iteration
        self.term = term
        self.index = index
