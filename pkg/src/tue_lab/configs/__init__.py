"""Configuration constants for perturbation generation and evaluation."""

from . import bench_constants
from .constants import (
    DEFAULT_EPSILON,
    DEFAULT_TEMPERATURE,
    DEFAULT_LAMBDA,
    Method,
    Mode,
)

from .bench_constants import *

__all__ = [
    "DEFAULT_EPSILON",
    "DEFAULT_TEMPERATURE",
    "DEFAULT_LAMBDA",
    "Method",
    "Mode",
] + [name for name in vars(bench_constants) if name.isupper()]
