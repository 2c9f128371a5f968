"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class BaliError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BaliError, ValueError):
    """An input violates a documented precondition or invariant."""


class PtsParseError(ValidationError):
    """A .pts annotation file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContainerError(BaliError):
    """A tensor container is unreadable; ``code`` names the corruption class.

    Codes: ``bad_magic``, ``truncated_payload``, ``dim_overflow``, ``bad_header``.
    """

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


class NoMassError(ValidationError):
    """A decode crop carried no heatmap mass; names the offending channel."""

    def __init__(self, channel: int):
        self.channel = channel
        super().__init__(f"channel {channel}: no heatmap mass inside decode crop")
