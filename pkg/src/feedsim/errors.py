"""Exception types shared across the package."""

from __future__ import annotations


class FeedsimError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(FeedsimError):
    """A row or line in an input file could not be parsed.

    Carries the location (row/line number) and the offending field so callers
    can point at the exact spot in the file.
    """

    def __init__(self, message: str, *, row: int | None = None, field: str | None = None):
        self.row = row
        self.field = field
        where = f" (row {row}" if row is not None else ""
        if field is not None:
            where += f", field '{field}'" if where else f" (field '{field}'"
        if where:
            where += ")"
        super().__init__(message + where)


class DuplicateItemError(FeedsimError):
    def __init__(self, item_ids: list[str]):
        self.item_ids = item_ids
        super().__init__(f"duplicate item_id(s): {', '.join(item_ids)}")


class UnknownItemError(FeedsimError):
    def __init__(self, item_id: str):
        self.item_id = item_id
        super().__init__(f"unknown item_id: {item_id}")


class ConfigError(FeedsimError):
    """Invalid configuration; message names the offending field."""

    def __init__(self, message: str, *, field: str | None = None):
        self.field = field
        super().__init__(f"{message} (field '{field}')" if field else message)


class SimulatorOutputError(FeedsimError):
    """A model-backed simulator produced output we could not parse.

    Carries the raw completion text for inspection; never silently defaulted.
    """

    def __init__(self, message: str, raw: str):
        self.raw = raw
        super().__init__(f"{message}; raw output: {raw!r}")


class LLMError(FeedsimError):
    """The chat-completions backend failed after retries."""


class PromptBudgetError(FeedsimError):
    """Prompt could not be fit inside the configured character budget."""


class SessionError(FeedsimError):
    """Session driven in an invalid way (wrong phase, finished session, ...)."""
