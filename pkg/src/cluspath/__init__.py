"""Temporal clustering of entity trajectories into phases and evolution paths."""
from .core import DataError, Dataset, HyperParams, Prototype, load_long_csv, preprocess
from .measures import MeasureVector, evaluate
from .solver import ClusPathModel, SolverConfig, fit

__version__ = "0.1.0"

__all__ = [
    "ClusPathModel",
    "DataError",
    "Dataset",
    "HyperParams",
    "MeasureVector",
    "Prototype",
    "SolverConfig",
    "evaluate",
    "fit",
    "load_long_csv",
    "preprocess",
    "__version__",
]
