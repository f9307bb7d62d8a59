import numpy as np
import pytest

from tue_lab.datasets.synthetic import SyntheticConfig, make_synthetic_split
from tue_lab.core.perturb import make_perturbation_set
from tue_lab.pipelines.config import GenConfig, ProbeConfig, TrainConfig

# tiny geometry so every test here runs in well under a second
TINY = dict(K=3, per_class=6, width=4, height=4, channels=1)


@pytest.fixture
def tiny_cfg() -> SyntheticConfig:
    return SyntheticConfig(seed=7, name="tiny", **TINY)


@pytest.fixture
def tiny_split(tiny_cfg):
    return make_synthetic_split(tiny_cfg, test_per_class=4)


@pytest.fixture
def tiny_train(tiny_split):
    return tiny_split[0]


@pytest.fixture
def tiny_test(tiny_split):
    return tiny_split[1]


@pytest.fixture
def tiny_pset(tiny_train):
    """Random perturbations inside a 0.1 budget, one per tiny training sample."""
    draw = np.random.default_rng(3)
    deltas = draw.uniform(-0.1, 0.1, size=(tiny_train.n, tiny_train.d))
    return make_perturbation_set(deltas, tiny_train.labels, 0.1, K=tiny_train.K, source_name="rand")


@pytest.fixture
def fast_gen():
    """A generator config that finishes in a blink on the tiny dataset."""

    def build(method: str, **overrides) -> GenConfig:
        base = dict(
            method=method,
            epochs=2,
            model_epochs_per_round=0.5,
            pgd_steps=2,
            epsilon=0.1,
            batch_size=6,
            seed=11,
            stop_train_accuracy=None,
        )
        base.update(overrides)
        return GenConfig(**base).validate()

    return build


@pytest.fixture
def fast_train() -> TrainConfig:
    return TrainConfig(epochs=2, batch_size=6, seed=5).validate()


@pytest.fixture
def fast_probe() -> ProbeConfig:
    return ProbeConfig(epochs=3, batch_size=4, seed=5).validate()


@pytest.fixture
def small_models():
    return {
        "encoder": {"hidden": 8, "feature_dim": 6, "projection_dim": 4},
        "classifier": {"hidden": 8},
    }
