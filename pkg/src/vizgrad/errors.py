"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: validation and data problems
exit 2, judge transport/parse problems exit 3, non-finite numerics exit 4.
"""

from __future__ import annotations

__all__ = [
    "VizgradError",
    "ValidationError",
    "DataError",
    "JudgeError",
    "JudgeTransportError",
    "JudgeParseError",
    "NumericError",
]


class VizgradError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(VizgradError):
    """Configuration, schema, or spec/dataset mismatch."""


class DataError(VizgradError):
    """Malformed or unusable input data."""


class JudgeError(VizgradError):
    """Base class for judge failures."""


class JudgeTransportError(JudgeError):
    """Remote judge could not be reached (after retries)."""


class JudgeParseError(JudgeError):
    """Remote judge replied, but no usable answer could be parsed.

    Carries the raw reply text in ``raw_reply``.
    """

    def __init__(self, message: str, raw_reply: str = ""):
        super().__init__(message)
        self.raw_reply = raw_reply


class NumericError(VizgradError):
    """A computation produced non-finite values."""
