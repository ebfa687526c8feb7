"""Crosslingual semantic parsing with ensembles over machine-translated inputs."""
from . import corpus, ensemble, kbexec, numeric, parser, transformer
from .errors import (ArityError, CapacityError, CheckpointError, ConfigurationError, DataError, DatasetError,
                     DegenerateInputError, ExecutionError, LFParseError, ParameterError, ShapeError,
                     VocabularyError, XSemParseError)

__version__ = "0.1.0"

__all__ = [
    "ArityError", "CapacityError", "CheckpointError", "ConfigurationError", "DataError", "DatasetError",
    "DegenerateInputError", "ExecutionError", "LFParseError", "ParameterError", "ShapeError",
    "VocabularyError", "XSemParseError", "corpus", "ensemble", "kbexec", "numeric", "parser", "transformer",
]
