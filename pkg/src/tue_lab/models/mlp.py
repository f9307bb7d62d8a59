"""
One-hidden-layer tanh MLPs with hand-derived backward passes.

Parameters are plain dicts of float64 arrays keyed W1, b1, W2, b2, ... with
weights stored (fan_in x fan_out), so a layer is `x @ W + b`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from tue_lab.configs.bench_constants import STREAM_INIT
from tue_lab.configs.constants import ZERO_NORM_TOL
from tue_lab.core.errors import ShapeMismatch
from tue_lab.core.kernel import DenseArray, as_dense, rng_for
from tue_lab.core.losses import cross_entropy

Params = Dict[str, DenseArray]


def _init_layer(draw: np.random.Generator, fan_in: int, fan_out: int) -> Tuple[DenseArray, DenseArray]:
    bound = 1.0 / np.sqrt(fan_in)
    W = draw.uniform(-bound, bound, size=(fan_in, fan_out))
    b = draw.uniform(-bound, bound, size=fan_out)
    return W, b


def _check_batch(batch: DenseArray, d: int) -> DenseArray:
    batch = as_dense(batch)
    if batch.ndim == 1 and batch.size == 0:
        batch = batch.reshape(0, d)
    if batch.ndim != 2 or batch.shape[1] != d:
        raise ShapeMismatch(f"expected a batch with {d} columns, got shape {batch.shape}")
    return batch


def layer_count(params: Params) -> int:
    return sum(1 for k in params if k.startswith("W"))


# Classifier f_theta: d -> h (tanh) -> K logits -----------------------------

@dataclass(frozen=True, eq=False)
class ClassifierModel:
    params: Params
    seed: int = field(default=0, compare=False)

    @property
    def d(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def K(self) -> int:
        return self.params["W2"].shape[1]

    def with_params(self, params: Params) -> "ClassifierModel":
        return replace(self, params=params)


def init_classifier(d: int, hidden: int, K: int, seed: int) -> ClassifierModel:
    draw = rng_for(seed, STREAM_INIT)
    W1, b1 = _init_layer(draw, d, hidden)
    W2, b2 = _init_layer(draw, hidden, K)
    return ClassifierModel(params={"W1": W1, "b1": b1, "W2": W2, "b2": b2}, seed=seed)


def classifier_forward(model: ClassifierModel, batch: DenseArray) -> DenseArray:
    p = model.params
    x = _check_batch(batch, model.d)
    hidden = np.tanh(x @ p["W1"] + p["b1"])
    return hidden @ p["W2"] + p["b2"]


def classifier_backward(
    model: ClassifierModel,
    batch: DenseArray,
    labels: np.ndarray,
) -> Tuple[Params, DenseArray, float]:
    """Gradients of the mean cross-entropy w.r.t. every parameter and every input pixel."""
    p = model.params
    x = _check_batch(batch, model.d)
    hidden = np.tanh(x @ p["W1"] + p["b1"])
    logits = hidden @ p["W2"] + p["b2"]
    loss, dlogits = cross_entropy(logits, labels)
    dpre = (dlogits @ p["W2"].T) * (1.0 - hidden * hidden)
    grads = {
        "W1": x.T @ dpre,
        "b1": dpre.sum(axis=0),
        "W2": hidden.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    return grads, dpre @ p["W1"].T, loss


# Encoder g_eta: d -> h (tanh) -> m (tanh) features -> p projection ---------

@dataclass(frozen=True, eq=False)
class EncoderModel:
    params: Params
    seed: int = field(default=0, compare=False)

    @property
    def d(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.params["W2"].shape[1]

    @property
    def projection_dim(self) -> int:
        return self.params["W3"].shape[1]

    def with_params(self, params: Params) -> "EncoderModel":
        return replace(self, params=params)


def init_encoder(d: int, hidden: int, feature_dim: int, projection_dim: int, seed: int) -> EncoderModel:
    draw = rng_for(seed, STREAM_INIT)
    W1, b1 = _init_layer(draw, d, hidden)
    W2, b2 = _init_layer(draw, hidden, feature_dim)
    W3, b3 = _init_layer(draw, feature_dim, projection_dim)
    return EncoderModel(params={"W1": W1, "b1": b1, "W2": W2, "b2": b2, "W3": W3, "b3": b3}, seed=seed)


def _encoder_pass(model: EncoderModel, x: DenseArray):
    p = model.params
    hidden = np.tanh(x @ p["W1"] + p["b1"])
    features = np.tanh(hidden @ p["W2"] + p["b2"])
    raw = features @ p["W3"] + p["b3"]
    norms = np.sqrt(np.sum(raw * raw, axis=1))
    degenerate = norms <= ZERO_NORM_TOL
    z = np.zeros_like(raw)
    z[~degenerate] = raw[~degenerate] / norms[~degenerate, None]
    if np.any(degenerate):
        logging.warning(f"encoder_forward: {int(degenerate.sum())} zero-norm projection rows use the fallback basis vector")
        z[degenerate, 0] = 1.0
    return hidden, features, norms, degenerate, z


def encoder_forward(model: EncoderModel, batch: DenseArray) -> Tuple[DenseArray, DenseArray]:
    """Features (b x m) and unit-norm projections (b x p)."""
    x = _check_batch(batch, model.d)
    _, features, _, _, z = _encoder_pass(model, x)
    return features, z


def encoder_backward(
    model: EncoderModel,
    batch: DenseArray,
    grad_proj: DenseArray,
    grad_features: Optional[DenseArray] = None,
) -> Tuple[Params, DenseArray]:
    """
    Pull a gradient on the unit-norm projections (and optionally on the
    features) back to every parameter and every input pixel. Rows that fell
    back to the basis vector are constant and pass no gradient.
    """
    p = model.params
    x = _check_batch(batch, model.d)
    hidden, features, norms, degenerate, z = _encoder_pass(model, x)
    gz = as_dense(grad_proj)
    if gz.shape != z.shape:
        raise ShapeMismatch(f"projection gradient {gz.shape} does not match projections {z.shape}")
    safe = np.where(degenerate, 1.0, norms)
    graw = (gz - z * np.sum(z * gz, axis=1, keepdims=True)) / safe[:, None]
    graw[degenerate] = 0.0

    dfeat = graw @ p["W3"].T
    if grad_features is not None:
        dfeat = dfeat + as_dense(grad_features)
    dpre2 = dfeat * (1.0 - features * features)
    dpre1 = (dpre2 @ p["W2"].T) * (1.0 - hidden * hidden)
    grads = {
        "W1": x.T @ dpre1,
        "b1": dpre1.sum(axis=0),
        "W2": hidden.T @ dpre2,
        "b2": dpre2.sum(axis=0),
        "W3": features.T @ graw,
        "b3": graw.sum(axis=0),
    }
    return grads, dpre1 @ p["W1"].T


# Linear probe head h_g: m -> K ---------------------------------------------

@dataclass(frozen=True, eq=False)
class ProbeHead:
    params: Params
    seed: int = field(default=0, compare=False)

    @property
    def feature_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def K(self) -> int:
        return self.params["W1"].shape[1]

    def with_params(self, params: Params) -> "ProbeHead":
        return replace(self, params=params)


def init_probe(feature_dim: int, K: int, seed: int) -> ProbeHead:
    draw = rng_for(seed, STREAM_INIT)
    W1, b1 = _init_layer(draw, feature_dim, K)
    return ProbeHead(params={"W1": W1, "b1": b1}, seed=seed)


def probe_forward(head: ProbeHead, features: DenseArray) -> DenseArray:
    f = _check_batch(features, head.feature_dim)
    return f @ head.params["W1"] + head.params["b1"]


def probe_backward(head: ProbeHead, features: DenseArray, labels: np.ndarray) -> Tuple[Params, float]:
    f = _check_batch(features, head.feature_dim)
    loss, dlogits = cross_entropy(f @ head.params["W1"] + head.params["b1"], labels)
    return {"W1": f.T @ dlogits, "b1": dlogits.sum(axis=0)}, loss


def predict(logits: DenseArray) -> np.ndarray:
    return np.argmax(logits, axis=1)
