"""Exception types shared across the package."""

from __future__ import annotations


class ZShotError(Exception):
    """Base class for all package errors."""


class NumericOverflowError(ZShotError, ArithmeticError):
    """A loss or gradient became non-finite.

    Carries the id of the offending example (and the epoch when raised
    during training) so the failure can be traced back to the data.
    """

    def __init__(self, message: str, example_id: str | None = None, epoch: int | None = None):
        self.example_id = example_id
        self.epoch = epoch
        parts = [message]
        if epoch is not None:
            parts.append(f"epoch={epoch}")
        if example_id is not None:
            parts.append(f"example={example_id}")
        super().__init__(" ".join(parts))


class CorpusError(ZShotError, ValueError):
    """Malformed corpus file or inconsistent example collection."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownDomainError(CorpusError):
    def __init__(self, domain: str, line: int | None = None):
        self.domain = domain
        super().__init__(f"unknown domain {domain!r}", line=line)


class ConfigError(ZShotError, ValueError):
    """Invalid experiment or model configuration."""
