"""Exception types shared across the package.

ValidationError covers everything a caller could have prevented (bad
input files, inconsistent configuration, mismatched data). Anything
else propagating out of the library is a genuine runtime failure.
"""


class ValidationError(ValueError):
    """Bad input data or configuration."""


class ParseError(ValidationError):
    """A data file did not match its declared format."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


class EmptyDatasetError(ValidationError):
    """No interactions survived loading/filtering."""


class FeatureCoverageError(ValidationError):
    """Items referenced by the interaction log have no feature vector."""

    def __init__(self, missing_ids):
        missing_ids = sorted(missing_ids)
        shown = ", ".join(missing_ids[:10])
        more = f" (+{len(missing_ids) - 10} more)" if len(missing_ids) > 10 else ""
        super().__init__(f"{len(missing_ids)} items have no feature vector: {shown}{more}")
        self.missing_ids = missing_ids


class CheckpointFormatError(ValidationError):
    """Checkpoint file is corrupt, truncated, or of an unknown version."""


class IncompatibleDataError(ValidationError):
    """Dataset does not match the ID maps stored in a checkpoint."""


class UnsupportedVariantError(ValidationError):
    """Operation requires parameters the model variant does not allocate."""
