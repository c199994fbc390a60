"""Exception hierarchy.

Everything raised on bad user input or bad artifacts derives from
:class:`SemSearchError`, which the CLI maps to exit code 1. Programming
contract violations (ids out of range, zero-norm vectors, k < 1) raise
plain ``ValueError`` and map to exit code 2.
"""


class SemSearchError(Exception):
    """Base class for user-facing errors."""


class ConfigError(SemSearchError):
    """Invalid configuration: unknown column, bad flag value, and the like."""


class CsvFormatError(SemSearchError):
    """Structurally malformed CSV input (reported with a row number)."""


class EmptyVocabularyError(SemSearchError):
    """No token survived the min-count filter."""


class StoreFormatError(SemSearchError):
    """An artifact file does not have the expected structure."""


class StoreVersionError(StoreFormatError):
    """Artifact format version is not supported."""


class TruncatedFileError(StoreFormatError):
    """Artifact file ends before its declared content does."""


class DimensionMismatchError(SemSearchError):
    """Artifacts disagree on vector dimensionality."""


class ProvenanceError(SemSearchError):
    """Artifacts were not built from the same corpus."""


class UnresolvableQueryError(SemSearchError):
    """No query token is in the vocabulary."""

    def __init__(self, dropped: list[str]):
        self.dropped = list(dropped)
        if self.dropped:
            detail = "all tokens out of vocabulary: " + ", ".join(self.dropped)
        else:
            detail = "query has no tokens"
        super().__init__(f"unresolvable query ({detail})")
