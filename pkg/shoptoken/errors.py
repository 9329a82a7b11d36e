"""Exception hierarchy shared by every shoptoken module."""

from typing import Optional


class ShopTokenError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(ShopTokenError, ValueError):
    """Invalid hasher, search or engine configuration."""


class CorpusFormatError(ShopTokenError, ValueError):
    """A corpus or input file could not be parsed into valid records."""

    def __init__(self, message: str, line_number: Optional[int] = None,
                 record_id: Optional[str] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
        self.record_id = record_id


class DimensionMismatchError(CorpusFormatError):
    """Embedding length differs from the corpus dimension."""


class RestrictionSyntaxError(ShopTokenError, ValueError):
    """Restriction query text does not match the grammar."""

    def __init__(self, message: str, offset: int, expected: str = ""):
        detail = f"syntax error at byte offset {offset}: {message}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)
        self.offset = offset
        self.expected = expected


class SnapshotError(ShopTokenError):
    """An index snapshot could not be written or read."""


class UnsupportedVersionError(SnapshotError):
    """Snapshot format_version is not understood by this build."""


class SnapshotIntegrityError(SnapshotError):
    """A snapshot section is truncated or fails its checksum."""

    def __init__(self, section: str, message: str):
        super().__init__(f"section '{section}': {message}")
        self.section = section


class EvaluationError(ShopTokenError, ValueError):
    """Evaluation inputs violate a metric's preconditions."""


class InvalidRequestError(ShopTokenError, ValueError):
    """A search request body is missing fields or has the wrong types."""
