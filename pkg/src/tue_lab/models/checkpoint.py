"""
TUEM checkpoint format (little-endian):
magic "TUEM", version u32, layer count u32, then per layer
rows u32, cols u32, f64 weights (rows x cols, row-major), f64 biases (cols).
"""
import logging
import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from tue_lab.configs.constants import CHECKPOINT_MAGIC, FORMAT_VERSION
from tue_lab.core.errors import FormatError
from tue_lab.core.utils import atomic_write_bytes
from tue_lab.models.mlp import ClassifierModel, EncoderModel, ProbeHead, layer_count

Model = Union[ClassifierModel, EncoderModel, ProbeHead]

# layer count identifies the architecture
_KINDS = {1: ProbeHead, 2: ClassifierModel, 3: EncoderModel}


def model_to_bytes(model: Model) -> bytes:
    n_layers = layer_count(model.params)
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", FORMAT_VERSION, n_layers)]
    for i in range(1, n_layers + 1):
        W = model.params[f"W{i}"]
        b = model.params[f"b{i}"]
        rows, cols = W.shape
        parts.append(struct.pack("<II", rows, cols))
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(payload: bytes) -> Model:
    if len(payload) < 12 or payload[:4] != CHECKPOINT_MAGIC:
        raise FormatError("not a TUEM checkpoint (bad magic)")
    version, n_layers = struct.unpack_from("<II", payload, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported TUEM version {version}")
    if n_layers not in _KINDS:
        raise FormatError(f"unsupported layer count {n_layers}")
    offset = 12
    params = {}
    layers: List[Tuple[int, int]] = []
    for i in range(1, n_layers + 1):
        if len(payload) < offset + 8:
            raise FormatError("truncated TUEM checkpoint (layer header)")
        rows, cols = struct.unpack_from("<II", payload, offset)
        offset += 8
        need = 8 * (rows * cols + cols)
        if len(payload) < offset + need:
            raise FormatError("truncated TUEM checkpoint (layer data)")
        W = np.frombuffer(payload, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols)
        offset += 8 * rows * cols
        b = np.frombuffer(payload, dtype="<f8", count=cols, offset=offset)
        offset += 8 * cols
        params[f"W{i}"] = W.astype(np.float64)
        params[f"b{i}"] = b.astype(np.float64)
        layers.append((rows, cols))
    if offset != len(payload):
        raise FormatError(f"TUEM checkpoint has {len(payload) - offset} trailing bytes")
    for (_, cols), (rows, _) in zip(layers, layers[1:]):
        if cols != rows:
            raise FormatError("TUEM layer shapes do not chain")
    return _KINDS[n_layers](params=params)


def save_model(model: Model, path: Union[str, Path]) -> Path:
    out = atomic_write_bytes(path, model_to_bytes(model))
    logging.info(f"Wrote checkpoint {out} ({layer_count(model.params)} layers)")
    return out


def load_model(path: Union[str, Path]) -> Model:
    return model_from_bytes(Path(path).read_bytes())
