"""Configuration constants for perturbation generation and evaluation."""
from enum import Enum

# Perturbation budget (L-infinity, pixel units in [0,1])
DEFAULT_EPSILON = 8 / 255

# Numerical floors
ZERO_NORM_TOL = 1e-12  # l2_normalize refuses vectors at or below this norm
CSD_EPSILON_FLOOR = 1e-8  # minimum centroid distance before CollapsedCentroids
FINITE_DIFF_STEP = 1e-5

# Contrastive defaults
DEFAULT_TEMPERATURE = 0.5
DEFAULT_LAMBDA = 1.0

# PGD schedule: steps per pass, step size as a fraction of epsilon
DEFAULT_PGD_STEPS = 20
DEFAULT_PGD_STEP_FRACTION = 0.1

# Interpolation grid used when several new samples are requested
DEFAULT_ALPHA_GRID = (0.25, 0.5, 0.75)

# Model dimensions
DEFAULT_HIDDEN = 128
DEFAULT_FEATURE_DIM = 64
DEFAULT_PROJECTION_DIM = 32

# Binary file formats (little-endian)
DATASET_MAGIC = b"TUED"
PERTURBATION_MAGIC = b"TUEP"
CHECKPOINT_MAGIC = b"TUEM"
FORMAT_VERSION = 1

# Environment override for the evaluation worker pool
THREADS_ENV_VAR = "TUE_THREADS"


class Method(Enum):
    EMN = "emn"
    UCL = "ucl"
    TUE = "tue"
    SN = "sn"

    def __str__(self):
        return self.value


class Mode(Enum):
    SUPERVISED = "supervised"
    UNSUPERVISED = "unsupervised"

    def __str__(self):
        return self.value
