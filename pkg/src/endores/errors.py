"""Exception types shared across the toolkit."""

from __future__ import annotations


class EndoresError(Exception):
    """Base class for toolkit errors."""


class InvalidSpec(EndoresError, ValueError):
    """Invalid data-generating spec; ``field`` names the offending parameter if known."""

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        super().__init__(message)


class SampleTooSmall(EndoresError, ValueError):
    pass


class ShapeMismatch(EndoresError, ValueError):
    pass


class RankDeficient(EndoresError, ArithmeticError):
    pass


class IncompatiblePair(EndoresError, ValueError):
    pass


class WindowTooLarge(EndoresError, ValueError):
    pass


class IndexOutOfRange(EndoresError, IndexError):
    pass


class ParseError(EndoresError, ValueError):
    """Malformed input document or data file; message carries the location."""


class ValidationError(EndoresError, ValueError):
    """Semantically invalid config; ``path`` names the offending field."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class WeakInstrumentWarning(UserWarning):
    """First-stage relevance below the reporting threshold. Not fatal."""


class IoError(EndoresError, OSError):
    pass
