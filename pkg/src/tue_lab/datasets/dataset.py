from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from tue_lab.configs.bench_constants import STREAM_SAMPLING
from tue_lab.core.errors import BadConfig, ShapeMismatch
from tue_lab.core.kernel import rng_for


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Labeled flat images in [0,1]^d with K classes. Pixel values are always
    float32-representable (stored as float64) so the TUED codec is lossless.
    """
    images: np.ndarray  # n x d
    labels: np.ndarray  # n, int64 in [0, K)
    K: int
    width: int
    height: int
    channels: int
    name: str = "dataset"

    @property
    def n(self) -> int:
        return int(self.images.shape[0])

    @property
    def d(self) -> int:
        return int(self.images.shape[1])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    def equals(self, other: "Dataset") -> bool:
        """Content equality; the name tag is not part of the content."""
        return (
            self.K == other.K
            and self.shape == other.shape
            and np.array_equal(self.labels, other.labels)
            and self.images.shape == other.images.shape
            and np.array_equal(self.images, other.images)
        )

    def validate(self) -> "Dataset":
        if self.images.ndim != 2 or self.labels.shape != (self.images.shape[0],):
            raise ShapeMismatch(f"images {self.images.shape} do not match labels {self.labels.shape}")
        if self.d != self.width * self.height * self.channels:
            raise ShapeMismatch(f"d={self.d} != {self.width}x{self.height}x{self.channels}")
        if self.K < 2:
            raise BadConfig(f"a dataset needs K >= 2 classes, got {self.K}")
        if self.n and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise BadConfig("pixels must lie in [0, 1]")
        if self.n and (self.labels.min() < 0 or self.labels.max() >= self.K):
            raise BadConfig(f"labels must lie in [0, {self.K})")
        missing = np.flatnonzero(self.class_counts() == 0)
        if missing.size:
            raise BadConfig(f"classes {missing.tolist()} have no samples")
        return self


def quantize_pixels(images: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(images, dtype=np.float64), 0.0, 1.0).astype(np.float32).astype(np.float64)


def make_dataset(
    images: np.ndarray,
    labels: np.ndarray,
    K: int,
    width: int,
    height: int,
    channels: int,
    name: str = "dataset",
) -> Dataset:
    """Clamp, quantize and validate."""
    return Dataset(
        images=np.ascontiguousarray(quantize_pixels(images)),
        labels=np.ascontiguousarray(labels, dtype=np.int64),
        K=int(K),
        width=int(width),
        height=int(height),
        channels=int(channels),
        name=name,
    ).validate()


def with_images(ds: Dataset, images: np.ndarray, name: Optional[str] = None) -> Dataset:
    return make_dataset(images, ds.labels, ds.K, ds.width, ds.height, ds.channels, name or ds.name)


def with_labels(ds: Dataset, labels: np.ndarray, name: Optional[str] = None) -> Dataset:
    return make_dataset(ds.images, labels, ds.K, ds.width, ds.height, ds.channels, name or ds.name)


def subset(ds: Dataset, index: np.ndarray, name: Optional[str] = None) -> Dataset:
    index = np.asarray(index, dtype=np.int64)
    return make_dataset(ds.images[index], ds.labels[index], ds.K, ds.width, ds.height, ds.channels, name or ds.name)


def class_capped_sample(ds: Dataset, cap: int, seed: int) -> Dataset:
    """
    Keep min(cap, class size) samples of every class, chosen uniformly without
    replacement; kept samples stay in their original order.
    """
    if cap < 1:
        raise BadConfig(f"cap must be >= 1, got {cap}")
    draw = rng_for(seed, STREAM_SAMPLING)
    keep = []
    for k in range(ds.K):
        idx = np.flatnonzero(ds.labels == k)
        if idx.size > cap:
            idx = np.sort(draw.choice(idx, size=cap, replace=False))
        keep.append(idx)
    return subset(ds, np.sort(np.concatenate(keep)), name=f"{ds.name}-cap{cap}")


def shuffle_labels(ds: Dataset, seed: int) -> Dataset:
    """Same images with the label vector permuted (label-noise control)."""
    draw = rng_for(seed, STREAM_SAMPLING)
    return with_labels(ds, draw.permutation(ds.labels), name=f"{ds.name}-shuffled")
