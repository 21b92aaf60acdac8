"""Exception hierarchy shared by every module.

Each family maps onto one CLI exit code so the command-line front end can
translate failures without inspecting messages.
"""

from __future__ import annotations


class VstgError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class UsageError(VstgError, ValueError):
    """Bad argument values (ratios, rates, thresholds, codebook sizes)."""

    exit_code = 1


class FormatError(VstgError):
    """A file or byte stream does not follow its declared binary/text layout."""

    exit_code = 3


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedError(FormatError):
    """Payload ended early. ``sample_index`` is set when a sample was cut off."""

    def __init__(self, message: str, sample_index: int | None = None) -> None:
        super().__init__(message)
        self.sample_index = sample_index


class CodewordRangeError(FormatError):
    """A codeword index lies outside its codebook."""


class ArchitectureError(FormatError):
    """Model file holds a different architecture than the one requested."""


class DimensionMismatchError(VstgError, ValueError):
    """Shapes of corpora, models, or windows disagree."""

    exit_code = 4


class LabelError(VstgError, ValueError):
    """An unlabeled sample reached an operation that needs ground truth."""

    exit_code = 3
