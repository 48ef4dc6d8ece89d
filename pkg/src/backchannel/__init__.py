"""Listener backchannel prediction: features, policies, training and evaluation."""
from . import behavior, corpus, dsp, heuristic, metrics, nnet, pipeline
from .errors import (ConfigurationError, CoverageError, DimensionError, InsufficientDataError,
                     SequencingError, ValidationError)

__version__ = "0.1.0"

__all__ = [
    "behavior", "corpus", "dsp", "heuristic", "metrics", "nnet", "pipeline",
    "ConfigurationError", "CoverageError", "DimensionError", "InsufficientDataError",
    "SequencingError", "ValidationError", "__version__",
]
