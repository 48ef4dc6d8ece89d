"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data violates a format or invariant."""


class ConfigurationError(ValueError):
    """A setting or combination of settings is invalid."""


class DimensionError(ValueError):
    """Array shapes do not match the model."""


class CoverageError(ValueError):
    """Feature streams do not cover a requested time span."""


class InsufficientDataError(ValueError):
    """Not enough examples to train or evaluate."""


class SequencingError(ValueError):
    """Streaming inputs arrived out of time order."""
