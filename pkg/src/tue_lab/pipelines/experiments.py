"""
Experiment orchestration: swap correspondences, transfer to other datasets,
the supervised/unsupervised matrix and the lambda sweep. Independent jobs may
fan out to a process pool; results are keyed, so completion order never
matters.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import replace
from typing import Any, Callable, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from tue_lab.configs.constants import DEFAULT_ALPHA_GRID, THREADS_ENV_VAR, Mode
from tue_lab.core.errors import BadConfig, EmptySourceClass
from tue_lab.core.perturb import (
    AssignmentMap,
    PerturbationSet,
    assign_classwise,
    expand_classes,
    expand_within,
    identity_map,
    swap_inter,
    swap_intra,
)
from tue_lab.core.utils import get_memory_mb
from tue_lab.datasets.dataset import Dataset
from tue_lab.pipelines.config import GenConfig, ProbeConfig, TrainConfig
from tue_lab.pipelines.generators import gen_tue
from tue_lab.pipelines.training import EvalResult, apply_perturbations, evaluate, separability_probe

CORRESPONDENCES = ("original", "intra", "inter")


def resolve_workers(workers: Optional[int] = None) -> int:
    """TUE_THREADS overrides the requested count; default 1."""
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise BadConfig(f"{THREADS_ENV_VAR} must be an integer, got '{env}'") from None
    workers = 1 if workers is None else workers
    if workers < 1:
        raise BadConfig(f"worker count must be >= 1, got {workers}")
    return workers


def run_jobs(fn: Callable[..., Any], jobs: Mapping[Hashable, Dict[str, Any]], workers: int = 1) -> Dict[Hashable, Any]:
    """
    Call fn(**kwargs) for every job. With one worker the jobs run in order in
    this process; otherwise in a ProcessPoolExecutor. fn must be picklable.
    """
    if workers <= 1 or len(jobs) <= 1:
        return {key: fn(**kwargs) for key, kwargs in jobs.items()}
    results: Dict[Hashable, Any] = {}
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = {ex.submit(fn, **kwargs): key for key, kwargs in jobs.items()}
        for f in as_completed(futures):
            results[futures[f]] = f.result()
            logging.info(f"Job {futures[f]} done ({len(results)}/{len(jobs)})")
    return {key: results[key] for key in jobs}


# Swap correspondences --------------------------------------------------------------

def swap_maps(pset: PerturbationSet, seed: int) -> Dict[str, AssignmentMap]:
    return {
        "original": identity_map(pset.n),
        "intra": swap_intra(pset, seed),
        "inter": swap_inter(pset, seed),
    }


def swap_eval(
    ds: Dataset,
    pset: PerturbationSet,
    test: Dataset,
    cfg: TrainConfig,
    *,
    seed: int = 0,
    workers: int = 1,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> Dict[str, EvalResult]:
    """
    Supervised accuracy with the generated correspondence, a within-class
    derangement and a whole-class swap of the same perturbations.
    """
    jobs = {}
    for name, amap in swap_maps(pset, seed).items():
        perturbed = apply_perturbations(ds, pset, amap)
        jobs[name] = dict(
            train=perturbed,
            test=test,
            mode=str(Mode.SUPERVISED),
            train_cfg=cfg,
            extra_ctx=extra_ctx,
        )
    logging.info(f"Swap evaluation of {pset.source_name}: {len(jobs)} trainings, mem={get_memory_mb():.1f} MB")
    results = run_jobs(evaluate, jobs, workers)
    for name in CORRESPONDENCES:
        logging.info(f"  {name}: accuracy {results[name].accuracy:.4f}")
    return results


# Transfer ------------------------------------------------------------------------------

def plan_transfer(
    pset: PerturbationSet,
    target: Dataset,
    *,
    class_map: Optional[Sequence[int]] = None,
    interpolate: bool = False,
    class_alphas: Sequence[float] = (0.5,),
    alphas: Sequence[float] = DEFAULT_ALPHA_GRID,
    seed: int = 0,
) -> Tuple[PerturbationSet, np.ndarray]:
    """
    Source set and class map covering the target. With `interpolate`, missing
    classes are created across class pairs and classes smaller than their
    target counterpart are grown within class.
    """
    source = pset
    if class_map is None:
        if target.K > source.K:
            if not interpolate:
                raise BadConfig(
                    f"target has {target.K} classes, source {source.K}; pass a class map or enable interpolation"
                )
            source = expand_classes(source, target.K, alphas=class_alphas, seed=seed)
        class_map = np.arange(target.K, dtype=np.int64)
    class_map = np.asarray(class_map, dtype=np.int64)
    if class_map.size != target.K:
        raise BadConfig(f"class map has {class_map.size} entries for {target.K} target classes")
    if class_map.min() < 0 or class_map.max() >= source.K:
        raise EmptySourceClass(f"class map points outside the {source.K} source classes")
    if interpolate:
        target_counts = np.zeros(source.K, dtype=np.int64)
        np.maximum.at(target_counts, class_map, target.class_counts())
        if np.any(target_counts > source.class_counts()):
            source = expand_within(source, np.maximum(target_counts, source.class_counts()), alphas=alphas, seed=seed)
    return source, class_map


def transfer_eval(
    pset: PerturbationSet,
    target: Dataset,
    target_test: Dataset,
    cfg: TrainConfig,
    *,
    class_map: Optional[Sequence[int]] = None,
    interpolate: bool = False,
    seed: int = 0,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> EvalResult:
    """Perturb a different dataset with a classwise assignment from pset, then train on it."""
    source, class_map = plan_transfer(pset, target, class_map=class_map, interpolate=interpolate, seed=seed)
    amap = assign_classwise(source, target.labels, class_map, seed)
    perturbed = apply_perturbations(target, source, amap)
    logging.info(f"Transfer of {pset.source_name} ({source.K} classes, n={source.n}) to {target.name} (n={target.n})")
    return evaluate(perturbed, target_test, str(Mode.SUPERVISED), cfg, extra_ctx=extra_ctx)


# Training-wise matrix ----------------------------------------------------------------

def training_wise_eval(
    train: Dataset,
    test: Dataset,
    sets: Mapping[str, PerturbationSet],
    train_cfg: TrainConfig,
    pretrain_cfg: Optional[TrainConfig] = None,
    probe_cfg: Optional[ProbeConfig] = None,
    *,
    modes: Sequence[str] = (str(Mode.SUPERVISED), str(Mode.UNSUPERVISED)),
    workers: int = 1,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> Dict[Tuple[str, str], EvalResult]:
    """One EvalResult per (method, mode), with the clean training set under the key "clean"."""
    candidates = {"clean": train}
    for name, pset in sets.items():
        candidates[name] = apply_perturbations(train, pset)
    jobs = {
        (name, str(mode)): dict(
            train=ds,
            test=test,
            mode=str(mode),
            train_cfg=train_cfg,
            pretrain_cfg=pretrain_cfg,
            probe_cfg=probe_cfg,
            extra_ctx=extra_ctx,
        )
        for name, ds in candidates.items()
        for mode in modes
    }
    return run_jobs(evaluate, jobs, workers)


# Lambda sweep ------------------------------------------------------------------------

def _sweep_point(
    ds: Dataset,
    cfg: GenConfig,
    probe_cfg: Optional[ProbeConfig],
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]],
) -> Dict[str, Any]:
    pset, trace = gen_tue(ds, cfg, extra_ctx=extra_ctx)
    sep = separability_probe(pset, cfg=probe_cfg)
    return {
        "lambda": cfg.lam,
        "csd": sep.csd,
        "probe_train_accuracy": sep.train_accuracy,
        "probe_heldout_accuracy": sep.heldout_accuracy,
        "rounds": len(trace),
    }


def lambda_sweep(
    ds: Dataset,
    cfg: GenConfig,
    lambdas: Sequence[float],
    probe_cfg: Optional[ProbeConfig] = None,
    *,
    workers: int = 1,
    extra_ctx: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> List[Dict[str, Any]]:
    """Regenerate TUE noise for every lambda; report final csd and perturbation separability."""
    jobs = {
        float(lam): dict(ds=ds, cfg=replace(cfg, lam=float(lam)).validate(), probe_cfg=probe_cfg, extra_ctx=extra_ctx)
        for lam in lambdas
    }
    results = run_jobs(_sweep_point, jobs, workers)
    return [results[float(lam)] for lam in lambdas]
