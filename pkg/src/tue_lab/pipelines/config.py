from dataclasses import dataclass, replace
from typing import Optional

from tue_lab.configs import bench_constants as bc
from tue_lab.configs.constants import (
    DEFAULT_EPSILON,
    DEFAULT_FEATURE_DIM,
    DEFAULT_HIDDEN,
    DEFAULT_LAMBDA,
    DEFAULT_PGD_STEP_FRACTION,
    DEFAULT_PGD_STEPS,
    DEFAULT_PROJECTION_DIM,
    DEFAULT_TEMPERATURE,
    Method,
)
from tue_lab.core.errors import BadConfig, UnknownMethod

# Keys reserved for the pipeline namespace. Cannot be used for pipeline component names.
RESERVED = {"round"}

# Context extras understood by the pipelines; each maps to a dict of parameters
COMPONENTS = {"augment", "encoder", "classifier"}

SCHEDULES = ("constant", "cosine")
CSD_SCOPES = ("global", "batch")


@dataclass(frozen=True)
class ModelDims:
    hidden: int = DEFAULT_HIDDEN
    feature_dim: int = DEFAULT_FEATURE_DIM
    projection_dim: int = DEFAULT_PROJECTION_DIM

    def validate(self) -> "ModelDims":
        if min(self.hidden, self.feature_dim, self.projection_dim) < 1:
            raise BadConfig(f"model dimensions must be positive, got {self}")
        return self


# note - pgd_step_size None means epsilon * DEFAULT_PGD_STEP_FRACTION
@dataclass(frozen=True)
class GenConfig:
    """
    Settings of one perturbation generation run.

    floor_collapsed defaults to True: generation starts from all-zero
    perturbations, so every class centroid coincides in the first round and the
    separability term would otherwise raise CollapsedCentroids before PGD could
    move anything. Standalone csd() keeps raising by default.
    """
    method: str
    epochs: int = bc.GEN_ROUNDS  # outer alternation rounds
    model_epochs_per_round: float = bc.GEN_MODEL_EPOCHS_PER_ROUND  # may be fractional
    pgd_steps: int = DEFAULT_PGD_STEPS
    pgd_step_size: Optional[float] = None
    epsilon: float = DEFAULT_EPSILON
    lam: float = DEFAULT_LAMBDA  # tue only
    temperature: float = DEFAULT_TEMPERATURE
    batch_size: int = bc.BATCH_SIZE
    lr: float = bc.PRETRAIN_LR
    momentum: float = bc.MOMENTUM
    seed: int = 0
    patch_size: int = 2  # sn only
    csd_scope: str = "global"  # centroids over the whole set or the current minibatch
    floor_collapsed: bool = True  # floor coincident centroids instead of raising
    stop_train_accuracy: Optional[float] = bc.EMN_STOP_TRAIN_ACCURACY  # emn only; None runs every round

    @property
    def method_enum(self) -> Method:
        try:
            return Method(self.method)
        except ValueError:
            raise UnknownMethod(f"unknown generation method '{self.method}'") from None

    @property
    def step_size(self) -> float:
        if self.pgd_step_size is not None:
            return self.pgd_step_size
        return self.epsilon * DEFAULT_PGD_STEP_FRACTION

    def validate(self) -> "GenConfig":
        self.method_enum
        if self.epochs < 0:
            raise BadConfig(f"epochs must be >= 0, got {self.epochs}")
        if self.model_epochs_per_round < 0:
            raise BadConfig(f"model_epochs_per_round must be >= 0, got {self.model_epochs_per_round}")
        if self.pgd_steps < 0:
            raise BadConfig(f"pgd_steps must be >= 0, got {self.pgd_steps}")
        if self.epsilon < 0:
            raise BadConfig(f"epsilon must be >= 0, got {self.epsilon}")
        if self.pgd_step_size is not None and self.pgd_step_size <= 0:
            raise BadConfig(f"pgd_step_size must be positive, got {self.pgd_step_size}")
        if self.lam < 0:
            raise BadConfig(f"lambda must be >= 0, got {self.lam}")
        if self.temperature <= 0:
            raise BadConfig(f"temperature must be positive, got {self.temperature}")
        if self.batch_size < 2:
            raise BadConfig(f"batch_size must be >= 2, got {self.batch_size}")
        if self.lr <= 0 or not 0.0 <= self.momentum < 1.0:
            raise BadConfig(f"bad optimizer settings lr={self.lr}, momentum={self.momentum}")
        if self.patch_size < 1:
            raise BadConfig(f"patch_size must be >= 1, got {self.patch_size}")
        if self.csd_scope not in CSD_SCOPES:
            raise BadConfig(f"csd_scope must be one of {CSD_SCOPES}, got '{self.csd_scope}'")
        if self.stop_train_accuracy is not None and not 0.0 < self.stop_train_accuracy <= 1.0:
            raise BadConfig(f"stop_train_accuracy must be in (0, 1], got {self.stop_train_accuracy}")
        return self


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = bc.SUPERVISED_EPOCHS
    lr: float = bc.SUPERVISED_LR
    momentum: float = bc.MOMENTUM
    batch_size: int = bc.BATCH_SIZE
    seed: int = 0
    schedule: str = "constant"
    temperature: float = DEFAULT_TEMPERATURE  # contrastive pre-training only

    def validate(self) -> "TrainConfig":
        if self.epochs < 0:
            raise BadConfig(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise BadConfig(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise BadConfig(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise BadConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if self.schedule not in SCHEDULES:
            raise BadConfig(f"schedule must be one of {SCHEDULES}, got '{self.schedule}'")
        if self.temperature <= 0:
            raise BadConfig(f"temperature must be positive, got {self.temperature}")
        return self


@dataclass(frozen=True)
class ProbeConfig(TrainConfig):
    epochs: int = bc.PROBE_EPOCHS
    lr: float = bc.PROBE_LR
    split_fraction: float = 0.5  # separability probe: share of each class used for training

    def validate(self) -> "ProbeConfig":
        super().validate()
        if not 0.0 < self.split_fraction < 1.0:
            raise BadConfig(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        return self


def init_gen_config(method: str, seed: int = 0, **overrides) -> GenConfig:
    """
    Helper function to initialize GenConfig
    """
    return GenConfig(method=str(method), seed=seed, **overrides).validate()


def init_supervised_config(seed: int = 0, **overrides) -> TrainConfig:
    return TrainConfig(seed=seed, **overrides).validate()


def init_pretrain_config(seed: int = 0, **overrides) -> TrainConfig:
    """Contrastive pre-training defaults (longer schedule, its own learning rate)."""
    base = TrainConfig(epochs=bc.PRETRAIN_EPOCHS, lr=bc.PRETRAIN_LR, seed=seed)
    return replace(base, **overrides).validate()


def init_probe_config(seed: int = 0, **overrides) -> ProbeConfig:
    return ProbeConfig(seed=seed, **overrides).validate()
