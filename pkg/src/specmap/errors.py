"""Exception types shared across the toolkit."""


class SpecmapError(Exception):
    """Base class for all toolkit errors."""


class FormatError(SpecmapError):
    """Malformed file container (WAV, feature file, checkpoint, manifest)."""


class UnsupportedFormatError(FormatError):
    """Well-formed file using an encoding this toolkit does not handle."""


class ConfigError(SpecmapError, ValueError):
    """Invalid configuration value or combination."""


class UsageError(ConfigError):
    """Bad command-line invocation."""


class ShapeError(SpecmapError, ValueError):
    """Array arguments with inconsistent dimensions."""


class NumericError(SpecmapError, ArithmeticError):
    """Non-finite values or a numerically unusable system."""


class ManifestError(SpecmapError):
    """Corpus manifest cannot be built or resolved."""


class NotFittedError(SpecmapError, RuntimeError):
    """Estimator used before fit()."""
