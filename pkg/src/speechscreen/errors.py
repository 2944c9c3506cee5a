"""Exception types for data rejected at the package boundary.

Everything deriving from DataError means "your input is bad", as opposed to
ValueError/RuntimeError which signal misuse of the API or an internal bug.
The CLI maps DataError (and OSError) to exit status 2.
"""


class DataError(Exception):
    """Input data failed validation."""


class WavFormatError(DataError):
    """WAV byte stream is malformed, truncated, or uses an unsupported encoding."""


class ManifestError(DataError):
    """Clip manifest violates the manifest schema or its invariants."""


class FeatureTableError(DataError):
    """Feature CSV is ragged, non-numeric, non-finite, or schema-inconsistent."""


class ModelFormatError(DataError):
    """Model document has a bad version, is truncated, or is internally inconsistent."""


class FoldError(DataError):
    """Fold assignment violates the subject-grouping constraint or fold indexing."""
