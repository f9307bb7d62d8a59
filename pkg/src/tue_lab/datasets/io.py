"""
TUED dataset format (little-endian):
magic "TUED", version u32 = 1, n u32, d u32, K u32, width u16, height u16,
channels u16, pad u16, labels i32[n], pixels f32[n*d].
"""
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from tue_lab.configs.constants import DATASET_MAGIC, FORMAT_VERSION
from tue_lab.core.errors import BadConfig, FormatError, ShapeMismatch
from tue_lab.core.utils import atomic_write_bytes
from tue_lab.datasets.dataset import Dataset, make_dataset

_HEADER = struct.Struct("<4sIIIIHHHH")


def dataset_to_bytes(ds: Dataset) -> bytes:
    header = _HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, ds.n, ds.d, ds.K, ds.width, ds.height, ds.channels, 0)
    return b"".join([
        header,
        np.ascontiguousarray(ds.labels, dtype="<i4").tobytes(),
        np.ascontiguousarray(ds.images, dtype="<f4").tobytes(),
    ])


def dataset_from_bytes(payload: bytes, name: str = "dataset") -> Dataset:
    if len(payload) < _HEADER.size:
        raise FormatError("truncated TUED file (header)")
    magic, version, n, d, K, width, height, channels, _ = _HEADER.unpack_from(payload, 0)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DATASET_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported TUED version {version}")
    expected = _HEADER.size + 4 * n + 4 * n * d
    if len(payload) != expected:
        raise FormatError(f"TUED length {len(payload)} != expected {expected}")
    if d != width * height * channels:
        raise FormatError(f"d={d} does not match geometry {width}x{height}x{channels}")
    labels = np.frombuffer(payload, dtype="<i4", count=n, offset=_HEADER.size).astype(np.int64)
    images = np.frombuffer(payload, dtype="<f4", count=n * d, offset=_HEADER.size + 4 * n)
    images = images.astype(np.float64).reshape(n, d)
    try:
        return make_dataset(images, labels, K, width, height, channels, name=name)
    except (BadConfig, ShapeMismatch) as e:
        raise FormatError(f"invalid TUED content: {e}") from e


def save_dataset(ds: Dataset, path: Union[str, Path]) -> Path:
    out = atomic_write_bytes(path, dataset_to_bytes(ds))
    logging.info(f"Wrote dataset {ds.name} (n={ds.n}) to {out}")
    return out


def load_dataset(path: Union[str, Path]) -> Dataset:
    path = Path(path)
    return dataset_from_bytes(path.read_bytes(), name=path.stem)
