"""
CIFAR-style binary ingestion: each record is one label byte followed by d
pixel bytes (channel planes, row-major), scaled by 1/255.
"""
import logging
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from tue_lab.core.errors import FormatError
from tue_lab.datasets.dataset import Dataset, make_dataset

CIFAR_SIDE = 32
CIFAR_CHANNELS = 3


def parse_cifar_records(
    payload: bytes,
    width: int = CIFAR_SIDE,
    height: int = CIFAR_SIDE,
    channels: int = CIFAR_CHANNELS,
):
    d = width * height * channels
    size = d + 1
    if len(payload) == 0 or len(payload) % size != 0:
        raise FormatError(f"{len(payload)} bytes is not a whole number of {size}-byte records")
    records = np.frombuffer(payload, dtype=np.uint8).reshape(-1, size)
    labels = records[:, 0].astype(np.int64)
    images = records[:, 1:].astype(np.float64) / 255.0
    return images, labels


def load_cifar_binary(
    paths: Union[str, Path, Iterable[Union[str, Path]]],
    width: int = CIFAR_SIDE,
    height: int = CIFAR_SIDE,
    channels: int = CIFAR_CHANNELS,
    K: Optional[int] = None,
    name: Optional[str] = None,
) -> Dataset:
    """
    Load one or more CIFAR-style batch files into a Dataset. `K` defaults to
    max label + 1; every class in [0, K) must be present.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    all_images, all_labels = [], []
    for path in paths:
        path = Path(path)
        images, labels = parse_cifar_records(path.read_bytes(), width, height, channels)
        logging.info(f"Read {labels.size} records from {path.name}")
        all_images.append(images)
        all_labels.append(labels)
    if not all_images:
        raise FormatError("no CIFAR batch files given")
    images = np.concatenate(all_images)
    labels = np.concatenate(all_labels)
    if K is None:
        K = int(labels.max()) + 1
    return make_dataset(images, labels, K, width, height, channels, name=name or "cifar")
