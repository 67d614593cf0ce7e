"""Dynamical regime identification in equation-term data."""

__version__ = "0.1.0"

from .errors import ConfigError, DataFormatError, NumericalError, RegimeError, ValidationError
from .score import global_score, local_score
from .term_store import TermDataset, load_dataset, standardize, write_dataset

__all__ = [
    "ConfigError",
    "DataFormatError",
    "NumericalError",
    "RegimeError",
    "TermDataset",
    "ValidationError",
    "global_score",
    "load_dataset",
    "local_score",
    "standardize",
    "write_dataset",
]
