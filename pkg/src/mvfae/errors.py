"""Exception hierarchy shared across the package."""


class MvfaeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MvfaeError):
    """Matrix shapes are incompatible with the requested operation."""


class ValidationError(MvfaeError):
    """An input violates a documented precondition or invariant."""


class DegenerateGraphError(ValidationError):
    """A network has no usable edges (e.g. all-zero weights)."""


class StratificationError(ValidationError):
    """A label class is missing from a split where it is required."""


class NumericError(MvfaeError):
    """A non-finite value (NaN/Inf) appeared where finite math is required."""


class ParseError(MvfaeError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class ConfigError(MvfaeError):
    """A run configuration is missing, malformed, or inconsistent."""


class MetricError(MvfaeError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class CheckpointError(MvfaeError):
    """Base class for checkpoint file problems."""


class BadMagicError(CheckpointError):
    """The file does not start with the expected magic bytes."""


class VersionMismatchError(CheckpointError):
    """The checkpoint format version is not supported."""


class ChecksumError(CheckpointError):
    """The payload CRC does not match (truncated or corrupted file)."""
