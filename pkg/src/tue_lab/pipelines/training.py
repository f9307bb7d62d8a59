"""
Supervised training, contrastive pre-training, linear probing and the linear
separability probe on perturbations. The step functions here are shared with
the generators' model-training half.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
from tqdm import tqdm

from tue_lab.configs import bench_constants as bc
from tue_lab.configs.constants import Mode
from tue_lab.core.errors import BadAssignment, BadConfig, ClassTooSmall, ShapeMismatch
from tue_lab.core.kernel import DenseArray, rng_for
from tue_lab.core.losses import csd, nt_xent
from tue_lab.core.perturb import AssignmentMap, PerturbationSet, clamp_valid, identity_map
from tue_lab.core.transforms import AugmentationPair, ImageShape, apply_batch_plans, draw_batch_plans
from tue_lab.core.utils import get_memory_mb
from tue_lab.datasets.dataset import Dataset, with_images
from tue_lab.models.mlp import (
    ClassifierModel,
    EncoderModel,
    ProbeHead,
    classifier_backward,
    classifier_forward,
    encoder_backward,
    encoder_forward,
    init_classifier,
    init_encoder,
    init_probe,
    predict,
    probe_backward,
    probe_forward,
)
from tue_lab.models.optim import Params, scheduled_lr, sgd_step
from tue_lab.pipelines.config import ProbeConfig, TrainConfig
from tue_lab.pipelines.context import augmentation_of, dims_of, make_context


@dataclass(frozen=True)
class EvalResult:
    mode: str
    train_tag: str
    accuracy: float  # clean-test accuracy in [0, 1]
    train_loss: float
    epochs: int
    seed: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SeparabilityResult:
    train_accuracy: float
    heldout_accuracy: float
    csd: float
    n_train: int
    n_heldout: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class MinibatchStream:
    """
    Endless stream of shuffled minibatch indices over n samples. A new
    permutation is drawn whenever the previous one is used up, so consecutive
    calls may straddle epoch boundaries (the last batch of an epoch is short).
    """

    def __init__(self, n: int, batch_size: int, draw: np.random.Generator):
        if n < 1 or batch_size < 1:
            raise BadConfig(f"minibatch stream needs n >= 1 and batch_size >= 1, got {n}, {batch_size}")
        self.n = n
        self.batch_size = batch_size
        self._draw = draw
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= self._order.size:
            self._order = self._draw.permutation(self.n)
            self._pos = 0
        batch = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch

    def batches_for(self, epochs: float) -> int:
        """Number of minibatches covering `epochs` (possibly fractional) passes."""
        return int(math.ceil(epochs * self.n / self.batch_size))


def epoch_batches(n: int, batch_size: int, draw: np.random.Generator):
    order = draw.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


# Perturbed datasets ------------------------------------------------------------

def apply_perturbations(ds: Dataset, pset: PerturbationSet, amap: Optional[AssignmentMap] = None) -> Dataset:
    """x_i + clamp_valid(x_i, delta_{H(i)}); labels unchanged. No map means H(i) = i."""
    if pset.d != ds.d:
        raise ShapeMismatch(f"perturbations have d={pset.d}, dataset has d={ds.d}")
    if amap is None:
        if pset.n != ds.n:
            raise BadAssignment(f"identity assignment needs equal sizes, got {pset.n} perturbations for {ds.n} samples")
        amap = identity_map(ds.n)
    if len(amap) != ds.n:
        raise BadAssignment(f"assignment covers {len(amap)} samples, dataset has {ds.n}")
    amap.validate(pset)
    deltas = clamp_valid(ds.images, pset.deltas[amap.index])
    return with_images(ds, ds.images + deltas, name=f"{ds.name}+{pset.source_name}")


def accuracy(logits: DenseArray, labels: np.ndarray) -> float:
    if labels.size == 0:
        return 0.0
    return float(np.mean(predict(logits) == labels))


# Step functions ---------------------------------------------------------------

def supervised_step(
    model: ClassifierModel,
    state: Optional[Params],
    x: DenseArray,
    y: np.ndarray,
    lr: float,
    momentum: float,
) -> Tuple[ClassifierModel, Params, float]:
    grads, _, loss = classifier_backward(model, x, y)
    params, state = sgd_step(model.params, grads, lr, state, momentum)
    return model.with_params(params), state, loss


def contrastive_step(
    encoder: EncoderModel,
    state: Optional[Params],
    x: DenseArray,
    aug: AugmentationPair,
    draw: np.random.Generator,
    shape: ImageShape,
    temperature: float,
    lr: float,
    momentum: float,
) -> Tuple[EncoderModel, Params, float]:
    """One NT-Xent step on two fresh views of every row of x."""
    views = apply_batch_plans(x, draw_batch_plans(x.shape[0], shape, aug, draw), aug.pad_value)
    _, z = encoder_forward(encoder, views)
    loss, grad_z = nt_xent(z, temperature)
    grads, _ = encoder_backward(encoder, views, grad_z)
    params, state = sgd_step(encoder.params, grads, lr, state, momentum)
    return encoder.with_params(params), state, loss


# Supervised training ------------------------------------------------------------

def train_supervised(
    ds: Dataset,
    test: Dataset,
    cfg: TrainConfig,
    *,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
    progress: bool = False,
) -> Tuple[ClassifierModel, EvalResult]:
    """
    Minibatch SGD with momentum on cross-entropy for cfg.epochs epochs, then
    accuracy on the clean `test` set.
    """
    cfg.validate()
    ctx = make_context(cfg, extra_ctx)
    dims = dims_of(ctx, "classifier")
    model = init_classifier(ds.d, dims.hidden, ds.K, cfg.seed)
    draw = rng_for(cfg.seed, bc.STREAM_SHUFFLE)
    state = None
    loss = float("nan")
    logging.info(f"Supervised training on {ds.name}: n={ds.n}, epochs={cfg.epochs}, mem={get_memory_mb():.1f} MB")
    for epoch in tqdm(range(cfg.epochs), desc=f"supervised {ds.name}", disable=not progress):
        lr = scheduled_lr(cfg.lr, epoch, cfg.epochs, cfg.schedule)
        losses = []
        for idx in epoch_batches(ds.n, cfg.batch_size, draw):
            model, state, batch_loss = supervised_step(model, state, ds.images[idx], ds.labels[idx], lr, cfg.momentum)
            losses.append(batch_loss)
        loss = float(np.mean(losses))
        logging.debug(f"epoch {epoch}: loss={loss:.6f} lr={lr:.5f}")
    acc = accuracy(classifier_forward(model, test.images), test.labels)
    logging.info(f"Finished supervised training on {ds.name}: test accuracy {acc:.4f}")
    return model, EvalResult(
        mode=str(Mode.SUPERVISED),
        train_tag=ds.name,
        accuracy=acc,
        train_loss=loss,
        epochs=cfg.epochs,
        seed=cfg.seed,
    )


# Contrastive pre-training and linear probing ----------------------------------

def pretrain_contrastive(
    ds: Dataset,
    cfg: TrainConfig,
    *,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
    progress: bool = False,
) -> EncoderModel:
    """NT-Xent pre-training on augmented pairs of ds images. Labels are never read."""
    cfg.validate()
    ctx = make_context(cfg, extra_ctx)
    dims = dims_of(ctx, "encoder")
    aug = augmentation_of(ctx)
    encoder = init_encoder(ds.d, dims.hidden, dims.feature_dim, dims.projection_dim, cfg.seed)
    shuffle = rng_for(cfg.seed, bc.STREAM_SHUFFLE)
    views = rng_for(cfg.seed, bc.STREAM_AUGMENT)
    state = None
    logging.info(f"Contrastive pre-training on {ds.name}: n={ds.n}, epochs={cfg.epochs}, mem={get_memory_mb():.1f} MB")
    for epoch in tqdm(range(cfg.epochs), desc=f"pretrain {ds.name}", disable=not progress):
        lr = scheduled_lr(cfg.lr, epoch, cfg.epochs, cfg.schedule)
        losses = []
        for idx in epoch_batches(ds.n, cfg.batch_size, shuffle):
            encoder, state, batch_loss = contrastive_step(
                encoder, state, ds.images[idx], aug, views, ds.shape, cfg.temperature, lr, cfg.momentum
            )
            losses.append(batch_loss)
        logging.debug(f"epoch {epoch}: nt-xent={np.mean(losses):.6f} lr={lr:.5f}")
    logging.info(f"Finished contrastive pre-training on {ds.name}")
    return encoder


def heldout_nt_xent(
    encoder: EncoderModel,
    images: DenseArray,
    shape: ImageShape,
    aug: AugmentationPair,
    seed: int,
    temperature: float,
) -> float:
    """NT-Xent of the encoder on one seeded pair of views of `images`."""
    draw = rng_for(seed, bc.STREAM_AUGMENT)
    views = apply_batch_plans(images, draw_batch_plans(images.shape[0], shape, aug, draw), aug.pad_value)
    _, z = encoder_forward(encoder, views)
    return nt_xent(z, temperature)[0]


def fit_probe(features: DenseArray, labels: np.ndarray, K: int, cfg: TrainConfig) -> Tuple[ProbeHead, float]:
    """Multinomial linear classifier on fixed features."""
    head = init_probe(features.shape[1], K, cfg.seed)
    draw = rng_for(cfg.seed, bc.STREAM_SHUFFLE)
    state = None
    loss = float("nan")
    for epoch in range(cfg.epochs):
        lr = scheduled_lr(cfg.lr, epoch, cfg.epochs, cfg.schedule)
        losses = []
        for idx in epoch_batches(features.shape[0], cfg.batch_size, draw):
            grads, batch_loss = probe_backward(head, features[idx], labels[idx])
            params, state = sgd_step(head.params, grads, lr, state, cfg.momentum)
            head = head.with_params(params)
            losses.append(batch_loss)
        loss = float(np.mean(losses))
    return head, loss


def linear_probe(encoder: EncoderModel, train: Dataset, test: Dataset, cfg: ProbeConfig) -> EvalResult:
    """Frozen encoder features; a ProbeHead trained on `train`, scored on `test`."""
    cfg.validate()
    train_features, _ = encoder_forward(encoder, train.images)
    test_features, _ = encoder_forward(encoder, test.images)
    head, loss = fit_probe(train_features, train.labels, train.K, cfg)
    acc = accuracy(probe_forward(head, test_features), test.labels)
    logging.info(f"Linear probe on {train.name}: test accuracy {acc:.4f}")
    return EvalResult(
        mode=str(Mode.UNSUPERVISED),
        train_tag=train.name,
        accuracy=acc,
        train_loss=loss,
        epochs=cfg.epochs,
        seed=cfg.seed,
    )


def evaluate(
    train: Dataset,
    test: Dataset,
    mode: str,
    train_cfg: TrainConfig,
    pretrain_cfg: Optional[TrainConfig] = None,
    probe_cfg: Optional[ProbeConfig] = None,
    *,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
    progress: bool = False,
) -> EvalResult:
    """
    One cell of the evaluation protocol. Supervised: train a classifier on
    `train`. Unsupervised: contrastive pre-training on `train`, then a linear
    probe fitted on the same (possibly perturbed) training set.
    """
    mode = Mode(str(mode))
    if mode is Mode.SUPERVISED:
        return train_supervised(train, test, train_cfg, extra_ctx=extra_ctx, progress=progress)[1]
    pretrain_cfg = pretrain_cfg or TrainConfig(epochs=bc.PRETRAIN_EPOCHS, lr=bc.PRETRAIN_LR, seed=train_cfg.seed)
    probe_cfg = probe_cfg or ProbeConfig(seed=train_cfg.seed)
    encoder = pretrain_contrastive(train, pretrain_cfg, extra_ctx=extra_ctx, progress=progress)
    return linear_probe(encoder, train, test, probe_cfg)


# Separability of perturbations --------------------------------------------------

def stratified_split(labels: np.ndarray, K: int, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per class, the first ceil(fraction * n_k) of a seeded shuffle train; at least one on each side."""
    draw = rng_for(seed, bc.STREAM_SPLIT)
    train, held = [], []
    for k in range(K):
        members = draw.permutation(np.flatnonzero(labels == k))
        if members.size < 2:
            raise ClassTooSmall(f"class {k} has {members.size} member(s); the separability probe needs 2")
        cut = min(max(int(math.ceil(fraction * members.size)), 1), members.size - 1)
        train.append(members[:cut])
        held.append(members[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(held))


def separability_probe(
    pset: PerturbationSet,
    split_fraction: Optional[float] = None,
    cfg: Optional[ProbeConfig] = None,
) -> SeparabilityResult:
    """
    Can a linear classifier read the class label off the perturbation alone?
    Perturbations are scaled by 1/epsilon first, so the probe sees entries in
    [-1, 1] whatever the budget.
    """
    cfg = cfg or ProbeConfig()
    fraction = cfg.split_fraction if split_fraction is None else split_fraction
    cfg.validate()
    if not 0.0 < fraction < 1.0:
        raise BadConfig(f"split_fraction must be in (0, 1), got {fraction}")
    train_idx, held_idx = stratified_split(pset.labels, pset.K, fraction, cfg.seed)
    scale = 1.0 / pset.epsilon if pset.epsilon > 0 else 1.0
    features = pset.deltas * scale
    head, _ = fit_probe(features[train_idx], pset.labels[train_idx], pset.K, cfg)
    report, _ = csd(pset.deltas, pset.labels, allow_floor=True)
    result = SeparabilityResult(
        train_accuracy=accuracy(probe_forward(head, features[train_idx]), pset.labels[train_idx]),
        heldout_accuracy=accuracy(probe_forward(head, features[held_idx]), pset.labels[held_idx]),
        csd=report.csd,
        n_train=int(train_idx.size),
        n_heldout=int(held_idx.size),
    )
    logging.info(
        f"Separability probe on {pset.source_name}: train {result.train_accuracy:.4f}, "
        f"held-out {result.heldout_accuracy:.4f}, csd {result.csd:.6g}"
    )
    return result
