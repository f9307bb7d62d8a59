from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from tqdm import tqdm

from tue_lab.configs import bench_constants as bc
from tue_lab.configs.constants import Method
from tue_lab.core.errors import BadConfig
from tue_lab.core.kernel import DenseArray, rng_for
from tue_lab.core.losses import csd, tue_objective
from tue_lab.core.perturb import PerturbationSet, make_perturbation_set, pgd_minimize, synth_sn
from tue_lab.core.transforms import apply_batch_plans, batch_plans_backward, draw_batch_plans
from tue_lab.core.utils import get_memory_mb
from tue_lab.datasets.dataset import Dataset
from tue_lab.models.mlp import classifier_backward, classifier_forward, encoder_backward, encoder_forward, init_classifier, init_encoder
from tue_lab.pipelines.config import GenConfig
from tue_lab.pipelines.context import Context, augmentation_of, dims_of, make_context
from tue_lab.pipelines.training import MinibatchStream, accuracy, contrastive_step, epoch_batches, supervised_step

# produce the trace record for a finished round from ctx["round"]
TraceFn = Callable[[Context], Dict[str, Any]]


@dataclass
class GenTrace:
    method: str
    records: List[Dict[str, Any]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, key: str) -> List[Any]:
        return [r[key] for r in self.records]

    def to_json(self) -> str:
        return json.dumps(self.records, indent=2)


def default_trace_fn(ctx: Context) -> Dict[str, Any]:
    r = ctx.round
    return {
        "round": r.index,
        "model_loss": r.model_loss,
        "perturbation_loss": r.perturbation_loss,
        "csd": r.csd,
        "elapsed": r.elapsed,
    }


class _SupervisedObjective:
    """Classifier f_theta with cross-entropy: the error-minimizing pair of steps."""

    def __init__(self, ds: Dataset, ctx: Context):
        dims = dims_of(ctx, "classifier")
        self.cfg: GenConfig = ctx.cfg
        self.model = init_classifier(ds.d, dims.hidden, ds.K, self.cfg.seed)
        self.state = None

    def train(self, x: DenseArray, y: np.ndarray) -> float:
        self.model, self.state, loss = supervised_step(self.model, self.state, x, y, self.cfg.lr, self.cfg.momentum)
        return loss

    def grad(self, x: DenseArray, deltas: DenseArray, y: np.ndarray) -> Tuple[float, DenseArray]:
        _, input_grad, loss = classifier_backward(self.model, x + deltas, y)
        return loss, input_grad

    def fit_accuracy(self, x: DenseArray, y: np.ndarray) -> float:
        return accuracy(classifier_forward(self.model, x), y)


class _ContrastiveObjective:
    """
    Encoder g_eta with NT-Xent over augmented views. The perturbation gradient
    flows back through the encoder and the view plans. With csd_scope "batch"
    the separability term uses minibatch centroids inside tue_objective;
    labels are only read when that term is active.
    """

    def __init__(self, ds: Dataset, ctx: Context, batch_lam: float):
        dims = dims_of(ctx, "encoder")
        self.cfg: GenConfig = ctx.cfg
        self.shape = ds.shape
        self.aug = augmentation_of(ctx)
        self.encoder = init_encoder(ds.d, dims.hidden, dims.feature_dim, dims.projection_dim, self.cfg.seed)
        self.state = None
        self.batch_lam = batch_lam
        self._train_views = rng_for(self.cfg.seed, bc.STREAM_AUGMENT)
        self._pgd_views = rng_for(self.cfg.seed + 1, bc.STREAM_AUGMENT)

    def train(self, x: DenseArray, y: np.ndarray) -> float:
        cfg = self.cfg
        self.encoder, self.state, loss = contrastive_step(
            self.encoder, self.state, x, self.aug, self._train_views, self.shape, cfg.temperature, cfg.lr, cfg.momentum
        )
        return loss

    def grad(self, x: DenseArray, deltas: DenseArray, y: np.ndarray) -> Tuple[float, DenseArray]:
        perturbed = x + deltas
        plans = draw_batch_plans(x.shape[0], self.shape, self.aug, self._pgd_views)
        views = apply_batch_plans(perturbed, plans, self.aug.pad_value)
        _, z = encoder_forward(self.encoder, views)

        def backprop(grad_z: DenseArray) -> DenseArray:
            _, grad_views = encoder_backward(self.encoder, views, grad_z)
            return batch_plans_backward(grad_views, perturbed, plans, self.aug.pad_value)

        # a minibatch holding a single class has no centroid pairs
        lam = self.batch_lam if self.batch_lam > 0 and np.unique(y).size > 1 else 0.0
        return tue_objective(
            z,
            self.cfg.temperature,
            deltas,
            y,
            lam,
            backprop=backprop,
            allow_floor=self.cfg.floor_collapsed,
        )


def _alternate(
    ds: Dataset,
    cfg: GenConfig,
    objective,
    *,
    global_lam: float,
    ctx: Context,
    trace_fn: TraceFn,
    progress: bool,
    stop_fn: Optional[Callable[[DenseArray], bool]] = None,
) -> Tuple[PerturbationSet, GenTrace]:
    """
    General pattern:
    start from zero perturbations
    S1: train the model on x + delta for model_epochs_per_round epochs of a persistent minibatch stream
    S2: one pass over the set in minibatches, pgd_steps signed-descent steps per minibatch,
        adding lam * the CSD gradient over the whole set (centroids recomputed every step)
    build a per-round context and record it through trace_fn
    """
    method = cfg.method_enum
    deltas = np.zeros((ds.n, ds.d), dtype=np.float64)
    trace = GenTrace(method=str(method))
    stream = MinibatchStream(ds.n, cfg.batch_size, rng_for(cfg.seed, bc.STREAM_SHUFFLE))
    pgd_order = rng_for(cfg.seed, bc.STREAM_PGD)
    step = cfg.step_size
    start = time.perf_counter()

    logging.info(f"Starting {method} generation on {ds.name}: n={ds.n}, rounds={cfg.epochs}, eps={cfg.epsilon:.5f}, mem={get_memory_mb():.1f} MB")
    for r in tqdm(range(cfg.epochs), desc=f"{method} {ds.name}", disable=not progress):
        # S1: model parameters
        model_losses = []
        for _ in range(stream.batches_for(cfg.model_epochs_per_round)):
            idx = stream.next()
            model_losses.append(objective.train(ds.images[idx] + deltas[idx], ds.labels[idx]))

        # S2: perturbations
        pert_losses = []
        if cfg.epsilon > 0 and cfg.pgd_steps > 0:
            for idx in epoch_batches(ds.n, cfg.batch_size, pgd_order):
                x, y = ds.images[idx], ds.labels[idx]
                for _ in range(cfg.pgd_steps):
                    loss, grad = objective.grad(x, deltas[idx], y)
                    if global_lam > 0:
                        report, grad_s = csd(deltas, ds.labels, allow_floor=cfg.floor_collapsed)
                        loss += global_lam * report.csd
                        grad = grad + global_lam * grad_s[idx]
                    deltas[idx] = pgd_minimize(deltas[idx], grad, step, cfg.epsilon)
                pert_losses.append(loss)

        round_state = {
            "index": r,
            "model_loss": float(np.mean(model_losses)) if model_losses else float("nan"),
            "perturbation_loss": float(np.mean(pert_losses)) if pert_losses else float("nan"),
            "csd": csd(deltas, ds.labels, allow_floor=True)[0].csd,
            "elapsed": time.perf_counter() - start,
        }
        record = trace_fn(ctx.with_extra(round=round_state))
        trace.records.append(record)
        logging.info(
            f"round {r}: model loss {round_state['model_loss']:.5f}, "
            f"perturbation loss {round_state['perturbation_loss']:.5f}, csd {round_state['csd']:.5f}"
        )
        if stop_fn is not None and stop_fn(deltas):
            logging.info(f"Stopping {method} generation after round {r}")
            break

    pset = make_perturbation_set(deltas, ds.labels, cfg.epsilon, K=ds.K, source_name=ds.name)
    logging.info(f"Finished {method} generation on {ds.name}: max |delta| {pset.linf():.5f}, mem={get_memory_mb():.1f} MB")
    return pset, trace


def _check_method(cfg: GenConfig, expected: Method) -> GenConfig:
    cfg.validate()
    if cfg.method_enum is not expected:
        raise BadConfig(f"expected a {expected} config, got method '{cfg.method}'")
    return cfg


def gen_emn(
    ds: Dataset,
    cfg: GenConfig,
    *,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
    trace_fn: TraceFn = default_trace_fn,
    progress: bool = False,
) -> Tuple[PerturbationSet, GenTrace]:
    """Error-minimizing noise: min over delta of min over theta of cross-entropy."""
    _check_method(cfg, Method.EMN)
    ctx = make_context(cfg, extra_ctx)
    objective = _SupervisedObjective(ds, ctx)
    stop_fn = None
    if cfg.stop_train_accuracy is not None:
        def stop_fn(deltas: DenseArray) -> bool:
            return objective.fit_accuracy(ds.images + deltas, ds.labels) >= cfg.stop_train_accuracy
    return _alternate(ds, cfg, objective, global_lam=0.0, ctx=ctx, trace_fn=trace_fn, progress=progress, stop_fn=stop_fn)


def _gen_contrastive(ds, cfg, extra_ctx, trace_fn, progress, lam):
    ctx = make_context(cfg, extra_ctx)
    batch_lam = lam if cfg.csd_scope == "batch" else 0.0
    global_lam = lam if cfg.csd_scope == "global" else 0.0
    objective = _ContrastiveObjective(ds, ctx, batch_lam)
    return _alternate(ds, cfg, objective, global_lam=global_lam, ctx=ctx, trace_fn=trace_fn, progress=progress)


def gen_ucl(
    ds: Dataset,
    cfg: GenConfig,
    *,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
    trace_fn: TraceFn = default_trace_fn,
    progress: bool = False,
) -> Tuple[PerturbationSet, GenTrace]:
    """Contrastive unlearnable noise; the objective never reads labels."""
    _check_method(cfg, Method.UCL)
    return _gen_contrastive(ds, cfg, extra_ctx, trace_fn, progress, lam=0.0)


def gen_tue(
    ds: Dataset,
    cfg: GenConfig,
    *,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
    trace_fn: TraceFn = default_trace_fn,
    progress: bool = False,
) -> Tuple[PerturbationSet, GenTrace]:
    """Contrastive noise plus lam * CSD. lam == 0 reproduces gen_ucl bit for bit."""
    _check_method(cfg, Method.TUE)
    return _gen_contrastive(ds, cfg, extra_ctx, trace_fn, progress, lam=cfg.lam)


def generate(
    ds: Dataset,
    cfg: GenConfig,
    *,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
    trace_fn: TraceFn = default_trace_fn,
    progress: bool = False,
) -> Tuple[PerturbationSet, GenTrace]:
    method = cfg.validate().method_enum
    if method is Method.SN:
        pset = synth_sn(ds.labels, ds.K, ds.shape, cfg.epsilon, cfg.patch_size, cfg.seed, source_name=ds.name)
        return pset, GenTrace(method=str(method))
    fn = {Method.EMN: gen_emn, Method.UCL: gen_ucl, Method.TUE: gen_tue}[method]
    return fn(ds, cfg, extra_ctx=extra_ctx, trace_fn=trace_fn, progress=progress)
