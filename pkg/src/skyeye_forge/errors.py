"""Exception hierarchy shared across the forge."""

from __future__ import annotations


class ForgeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ForgeError):
    """A domain value violates one of its invariants."""


class BoxGrammarError(ValidationError):
    """A box string does not satisfy the coordinate grammar."""


class IngestError(ForgeError):
    """An annotation file could not be parsed into source records."""

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        prefix = ""
        if source is not None:
            prefix = source if line is None else f"{source}:{line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class RenderError(ForgeError):
    """Instruction or conversation rendering failed."""


class CorpusBuildError(ForgeError):
    """The corpus build cannot proceed (leakage, missing pools, bad mix)."""


class JudgeRunError(ForgeError):
    """The judge run aborted (endpoint failures above the tolerated rate)."""


class ConfigError(ForgeError):
    """The build configuration file is missing, unreadable, or inconsistent."""
