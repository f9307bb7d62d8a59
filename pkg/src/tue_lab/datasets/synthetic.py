"""Class-patterned synthetic image datasets: the desk-scale benchmark substrate."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from tue_lab.configs import bench_constants as bc
from tue_lab.core.errors import BadConfig
from tue_lab.core.kernel import rng_for
from tue_lab.datasets.dataset import Dataset, make_dataset


@dataclass(frozen=True)
class SyntheticConfig:
    K: int = bc.BENCH_CLASSES
    per_class: int = bc.BENCH_TRAIN_PER_CLASS
    width: int = bc.BENCH_WIDTH
    height: int = bc.BENCH_HEIGHT
    channels: int = bc.BENCH_CHANNELS
    pattern_strength: float = bc.BENCH_PATTERN_STRENGTH
    noise_std: float = bc.BENCH_NOISE_STD
    seed: int = 0
    grid: int = bc.TEMPLATE_GRID
    name: str = "synthetic"

    def validate(self) -> "SyntheticConfig":
        if self.K < 2:
            raise BadConfig(f"K must be >= 2, got {self.K}")
        if self.per_class < 1:
            raise BadConfig(f"per_class must be >= 1, got {self.per_class}")
        if min(self.width, self.height, self.channels) < 1:
            raise BadConfig("image geometry must be positive")
        if not 0.0 < self.pattern_strength <= 1.0:
            raise BadConfig(f"pattern_strength must be in (0, 1], got {self.pattern_strength}")
        if self.noise_std < 0:
            raise BadConfig(f"noise_std must be >= 0, got {self.noise_std}")
        if self.grid < 1:
            raise BadConfig(f"grid must be >= 1, got {self.grid}")
        if self.pattern_strength + 3 * self.noise_std > 1.0:
            logging.warning(
                f"pattern_strength={self.pattern_strength} with noise_std={self.noise_std} "
                f"will clamp a noticeable share of pixels"
            )
        return self


def class_templates(cfg: SyntheticConfig) -> np.ndarray:
    """
    K x d templates: a uniform [-1, 1] pattern on a coarse grid, upsampled to the
    image size (nearest), scaled by pattern_strength / 2 and centered at 0.5.
    """
    draw = rng_for(cfg.seed, bc.STREAM_TEMPLATES)
    g = min(cfg.grid, cfg.height, cfg.width)
    coarse = draw.uniform(-1.0, 1.0, size=(cfg.K, cfg.channels, g, g))
    rows = (np.arange(cfg.height) * g) // cfg.height
    cols = (np.arange(cfg.width) * g) // cfg.width
    fine = coarse[:, :, rows][:, :, :, cols]
    return 0.5 + 0.5 * cfg.pattern_strength * fine.reshape(cfg.K, -1)


def _draw_split(cfg: SyntheticConfig, templates: np.ndarray, per_class: int, stream: int, tag: str) -> Dataset:
    draw = rng_for(cfg.seed, stream)
    labels = np.repeat(np.arange(cfg.K, dtype=np.int64), per_class)
    noise = draw.normal(0.0, cfg.noise_std, size=(labels.size, templates.shape[1])) if cfg.noise_std > 0 else 0.0
    images = templates[labels] + noise
    return make_dataset(images, labels, cfg.K, cfg.width, cfg.height, cfg.channels, name=f"{cfg.name}-{tag}")


def make_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Training draw: per_class noisy copies of each class template, clamped to [0,1]."""
    cfg.validate()
    ds = _draw_split(cfg, class_templates(cfg), cfg.per_class, bc.STREAM_TRAIN, "train")
    logging.info(f"Generated {ds.name}: n={ds.n}, d={ds.d}, K={ds.K}")
    return ds


def make_synthetic_split(cfg: SyntheticConfig, test_per_class: int = bc.BENCH_TEST_PER_CLASS) -> Tuple[Dataset, Dataset]:
    """(train, test) drawn from the same templates on disjoint RNG streams."""
    cfg.validate()
    templates = class_templates(cfg)
    train = _draw_split(cfg, templates, cfg.per_class, bc.STREAM_TRAIN, "train")
    test = _draw_split(cfg, templates, test_per_class, bc.STREAM_TEST, "test")
    logging.info(f"Generated {cfg.name}: train n={train.n}, test n={test.n}, K={cfg.K}")
    return train, test
