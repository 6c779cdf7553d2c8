"""Exception types shared across the toolkit.

Every error carries a short machine-readable category used by the CLI
error prefix (``ERROR:<category>:``).
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    category = "internal"


class ConfigurationError(ToolkitError):
    """Invalid configuration values or inconsistent options."""

    category = "config"


class ShapeError(ToolkitError):
    """Array dimensions do not match what an operation requires."""

    category = "shape"


class DataError(ToolkitError):
    """Invalid data payloads: bad labels, empty manifests, too few frames."""

    category = "data"


class NormalizationError(DataError):
    """Too little data to normalize (CMVN needs at least two frames)."""

    category = "data"


class NumericError(ToolkitError):
    """Non-finite values encountered during computation or training."""

    category = "numeric"


class FormatError(ToolkitError):
    """A file does not conform to its declared binary or text format."""

    category = "format"
