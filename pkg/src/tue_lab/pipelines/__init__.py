"""Generation, training, experiment orchestration and reports."""

from . import config
from . import context
from . import generators
from . import training
from . import experiments
from . import reports

__all__ = [
    "config",
    "context",
    "generators",
    "training",
    "experiments",
    "reports",
]
