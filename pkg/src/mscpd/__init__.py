"""Multiscale change-point detection in high-dimensional time series.

Local two-sample tests are run on a grid of (location, scale) pairs and their
verdicts are aggregated into change-point estimates.
"""

from .aggregation import Segmentation, TestOutcomeMap, aggregate_v1, aggregate_v2
from .detect import detect, evaluate_grid
from .errors import ConfigError, DataError, InvalidInputError, OutOfRangeError
from .gaussian import GaussianTestConfig
from .grid import Grid, GridPoint, build_adic_grid, build_complete_grid, build_dyadic_grid, build_grid
from .kernels import BACKEND
from .stats import TimeSeries
from .subgaussian import SubGaussianTestConfig

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DataError",
    "GaussianTestConfig",
    "Grid",
    "GridPoint",
    "InvalidInputError",
    "OutOfRangeError",
    "Segmentation",
    "SubGaussianTestConfig",
    "TestOutcomeMap",
    "TimeSeries",
    "aggregate_v1",
    "aggregate_v2",
    "build_adic_grid",
    "build_complete_grid",
    "build_dyadic_grid",
    "build_grid",
    "detect",
    "evaluate_grid",
]
