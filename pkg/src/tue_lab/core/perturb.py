"""
Perturbation-set mechanics: L-infinity budget, PGD steps, validity clamping,
assignment onto target datasets, swap protocols, interpolation and the
classwise synthetic-noise baseline.

TUEP format (little-endian): magic "TUEP", version u32 = 1, n u32, d u32, K u32,
epsilon f32, labels i32[n], deltas f32[n*d].
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from itertools import cycle
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from tue_lab.configs.bench_constants import STREAM_ASSIGN
from tue_lab.configs.constants import DEFAULT_ALPHA_GRID, FORMAT_VERSION, PERTURBATION_MAGIC
from tue_lab.core.errors import (
    BadAssignment,
    BadConfig,
    ClassTooSmall,
    EmptySourceClass,
    FormatError,
    ShapeMismatch,
)
from tue_lab.core.kernel import DenseArray, as_dense, rng_for
from tue_lab.core.utils import atomic_write_bytes

_HEADER = struct.Struct("<4sIIIIf")


@dataclass(frozen=True, eq=False)
class PerturbationSet:
    """
    n perturbations with a shared L-infinity budget. `labels[i]` is the class of
    the source sample delta_i was generated for. Deltas and epsilon are
    float32-representable so the TUEP codec is lossless.
    """
    deltas: np.ndarray  # n x d
    labels: np.ndarray  # n
    epsilon: float
    K: int
    source_name: str = "source"

    @property
    def n(self) -> int:
        return int(self.deltas.shape[0])

    @property
    def d(self) -> int:
        return int(self.deltas.shape[1])

    def linf(self) -> float:
        return float(np.max(np.abs(self.deltas), initial=0.0))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def equals(self, other: "PerturbationSet") -> bool:
        return (
            self.K == other.K
            and self.epsilon == other.epsilon
            and np.array_equal(self.labels, other.labels)
            and self.deltas.shape == other.deltas.shape
            and np.array_equal(self.deltas, other.deltas)
        )


def quantize_epsilon(epsilon: float) -> float:
    return float(np.float32(epsilon))


def make_perturbation_set(
    deltas: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
    K: Optional[int] = None,
    source_name: str = "source",
) -> PerturbationSet:
    """
    Quantize to float32 and check the hard invariants: every |entry| <= epsilon,
    labels in [0, K), every class present.
    """
    if epsilon < 0:
        raise BadConfig(f"epsilon must be >= 0, got {epsilon}")
    deltas = np.asarray(deltas, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if deltas.ndim != 2 or labels.shape != (deltas.shape[0],):
        raise ShapeMismatch(f"deltas {deltas.shape} do not match labels {labels.shape}")
    eps = quantize_epsilon(epsilon)
    deltas = np.ascontiguousarray(deltas.astype(np.float32).astype(np.float64))
    if deltas.size and float(np.max(np.abs(deltas))) > eps:
        raise BadConfig(f"perturbation exceeds budget: max |delta| = {np.max(np.abs(deltas))} > {eps}")
    if K is None:
        K = int(labels.max()) + 1 if labels.size else 0
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise BadConfig(f"labels must lie in [0, {K})")
    missing = np.flatnonzero(np.bincount(labels, minlength=K) == 0)
    if missing.size:
        raise BadConfig(f"classes {missing.tolist()} have no perturbations")
    return PerturbationSet(deltas=deltas, labels=labels, epsilon=eps, K=int(K), source_name=source_name)


def zero_set(labels: np.ndarray, d: int, epsilon: float, K: int, source_name: str = "source") -> PerturbationSet:
    return make_perturbation_set(np.zeros((len(labels), d)), labels, epsilon, K, source_name)


@dataclass(frozen=True, eq=False)
class AssignmentMap:
    """H: target index -> index into the source PerturbationSet."""
    index: np.ndarray

    def __len__(self) -> int:
        return int(self.index.size)

    def validate(self, source: PerturbationSet) -> "AssignmentMap":
        if self.index.size and (self.index.min() < 0 or self.index.max() >= source.n):
            raise BadAssignment(f"assignment indexes outside [0, {source.n})")
        return self


def identity_map(n: int) -> AssignmentMap:
    return AssignmentMap(index=np.arange(n, dtype=np.int64))


# Budget and PGD -------------------------------------------------------------

def project_linf(delta: DenseArray, epsilon: float) -> DenseArray:
    if epsilon < 0:
        raise BadConfig(f"epsilon must be >= 0, got {epsilon}")
    return np.clip(as_dense(delta), -epsilon, epsilon)


def clamp_valid(x: DenseArray, delta: DenseArray) -> DenseArray:
    """Smallest elementwise change to delta that keeps x + delta inside [0, 1]."""
    x = as_dense(x)
    return np.clip(as_dense(delta), -x, 1.0 - x)


def pgd_minimize(delta: DenseArray, grad: DenseArray, step_size: float, epsilon: float) -> DenseArray:
    """One signed descent step followed by projection onto the epsilon-ball."""
    delta = as_dense(delta)
    grad = as_dense(grad)
    if delta.shape != grad.shape:
        raise ShapeMismatch(f"delta {delta.shape} and gradient {grad.shape} differ")
    if step_size <= 0:
        raise BadConfig(f"step size must be positive, got {step_size}")
    return project_linf(delta - step_size * np.sign(grad), epsilon)


# Assignment and swaps -------------------------------------------------------

def assign_classwise(
    source: PerturbationSet,
    target_labels: np.ndarray,
    class_map: Sequence[int],
    seed: int,
) -> AssignmentMap:
    """
    Give every target sample a uniformly drawn source perturbation whose label is
    class_map[target label]. Target classes are visited in ascending order.
    """
    target_labels = np.asarray(target_labels, dtype=np.int64)
    class_map = np.asarray(class_map, dtype=np.int64)
    if target_labels.size and target_labels.max() >= class_map.size:
        raise BadAssignment(f"class map covers {class_map.size} target classes, labels reach {target_labels.max()}")
    draw = rng_for(seed, STREAM_ASSIGN)
    index = np.empty(target_labels.size, dtype=np.int64)
    for t in range(class_map.size):
        rows = np.flatnonzero(target_labels == t)
        if rows.size == 0:
            continue
        pool = source.members(int(class_map[t])) if 0 <= class_map[t] < source.K else np.empty(0, dtype=np.int64)
        if pool.size == 0:
            raise EmptySourceClass(f"target class {t} maps to source class {class_map[t]} with no perturbations")
        index[rows] = pool[draw.integers(0, pool.size, size=rows.size)]
    return AssignmentMap(index=index)


def _cyclic_derangement(items: np.ndarray, draw: np.random.Generator) -> np.ndarray:
    """Shuffle, then send each element to its successor: a single cycle, no fixed points."""
    order = draw.permutation(items)
    out = np.empty_like(items)
    out_pos = {int(v): i for i, v in enumerate(items)}
    for i, v in enumerate(order):
        out[out_pos[int(v)]] = order[(i + 1) % order.size]
    return out


def swap_intra(pset: PerturbationSet, seed: int) -> AssignmentMap:
    """Within-class derangement: sample i receives another member of its own class."""
    draw = rng_for(seed, STREAM_ASSIGN)
    index = np.empty(pset.n, dtype=np.int64)
    for k in range(pset.K):
        members = pset.members(k)
        if members.size < 2:
            raise ClassTooSmall(f"class {k} has {members.size} member(s); intra-class swap needs 2")
        index[members] = _cyclic_derangement(members, draw)
    return AssignmentMap(index=index)


def class_derangement(K: int, seed: int) -> np.ndarray:
    if K < 2:
        raise ClassTooSmall(f"inter-class swap needs at least 2 classes, got {K}")
    return _cyclic_derangement(np.arange(K, dtype=np.int64), rng_for(seed, STREAM_ASSIGN))


def swap_inter(pset: PerturbationSet, seed: int) -> AssignmentMap:
    """
    Whole-class swap: a class derangement pi, then every sample of class k
    receives a perturbation of class pi(k). A receiving class larger than its
    donor re-uses donor perturbations in a seeded order.
    """
    pi = class_derangement(pset.K, seed)
    draw = rng_for(seed, STREAM_ASSIGN + 1)
    index = np.empty(pset.n, dtype=np.int64)
    for k in range(pset.K):
        receivers = pset.members(k)
        donors = draw.permutation(pset.members(int(pi[k])))
        if receivers.size > donors.size:
            logging.warning(f"swap_inter: class {k} ({receivers.size}) re-uses perturbations of class {pi[k]} ({donors.size})")
            extra = donors[draw.integers(0, donors.size, size=receivers.size - donors.size)]
            donors = np.concatenate([donors, extra])
        index[receivers] = donors[:receivers.size]
    return AssignmentMap(index=index)


def gather(pset: PerturbationSet, amap: AssignmentMap) -> Tuple[np.ndarray, np.ndarray]:
    """(deltas, source labels) in target order."""
    amap.validate(pset)
    return pset.deltas[amap.index], pset.labels[amap.index]


# Interpolation ---------------------------------------------------------------

def _pick_pair(members: np.ndarray, draw: np.random.Generator) -> Tuple[int, int]:
    i, j = draw.choice(members.size, size=2, replace=False)
    return int(members[i]), int(members[j])


def interpolate_within(pset: PerturbationSet, k: int, alpha: float, pair_seed: int) -> DenseArray:
    """alpha * delta_i + (1 - alpha) * delta_j for a seeded pair i != j of class k."""
    if not 0.0 <= alpha <= 1.0:
        raise BadConfig(f"alpha must be in [0, 1], got {alpha}")
    members = pset.members(k)
    if members.size < 2:
        raise ClassTooSmall(f"class {k} has {members.size} member(s); interpolation needs 2")
    i, j = _pick_pair(members, rng_for(pair_seed, STREAM_ASSIGN))
    mixed = alpha * pset.deltas[i] + (1.0 - alpha) * pset.deltas[j]
    return project_linf(mixed, pset.epsilon)


def interpolate_across(
    pset: PerturbationSet,
    classes: Tuple[int, int],
    alpha: float,
    pair_seed: int,
    count: Optional[int] = None,
) -> PerturbationSet:
    """
    Append a new class (id K) of `count` perturbations, each a convex
    combination of a class-a and a class-b member. `count` defaults to the
    smaller of the two class sizes.
    """
    a, b = classes
    if a == b:
        raise BadConfig("interpolation across classes needs two different classes")
    if not 0.0 < alpha < 1.0:
        raise BadConfig(f"alpha must be in (0, 1), got {alpha}")
    ma, mb = pset.members(a), pset.members(b)
    if ma.size == 0 or mb.size == 0:
        raise EmptySourceClass(f"classes {a} and {b} must both have members")
    if count is None:
        count = min(ma.size, mb.size)
    draw = rng_for(pair_seed, STREAM_ASSIGN)
    ia = ma[draw.integers(0, ma.size, size=count)] if count > ma.size else draw.permutation(ma)[:count]
    ib = mb[draw.integers(0, mb.size, size=count)] if count > mb.size else draw.permutation(mb)[:count]
    mixed = project_linf(alpha * pset.deltas[ia] + (1.0 - alpha) * pset.deltas[ib], pset.epsilon)
    return make_perturbation_set(
        np.concatenate([pset.deltas, mixed]),
        np.concatenate([pset.labels, np.full(count, pset.K, dtype=np.int64)]),
        pset.epsilon,
        K=pset.K + 1,
        source_name=pset.source_name,
    )


def class_pairs(K: int) -> List[Tuple[int, int]]:
    """Unordered class pairs, neighbours first: (0,1), (1,2), ..., (K-1,0), then wider offsets."""
    seen = set()
    pairs = []
    for offset in range(1, K):
        for a in range(K):
            b = (a + offset) % K
            key = (min(a, b), max(a, b))
            if key not in seen:
                seen.add(key)
                pairs.append((a, b))
    return pairs


def expand_classes(
    pset: PerturbationSet,
    target_K: int,
    alphas: Sequence[float] = (0.5,),
    seed: int = 0,
    count: Optional[int] = None,
) -> PerturbationSet:
    """Interpolate across class pairs until the set has target_K classes."""
    if target_K <= pset.K:
        return pset
    plan = [(pair, alpha) for alpha in alphas for pair in class_pairs(pset.K)]
    if len(plan) < target_K - pset.K:
        raise BadConfig(f"cannot build {target_K} classes from {pset.K} with {len(alphas)} alpha value(s)")
    out = pset
    for t, (pair, alpha) in enumerate(plan[:target_K - pset.K]):
        out = interpolate_across(out, pair, alpha, pair_seed=seed + t, count=count)
    logging.info(f"Expanded {pset.K} classes to {out.K} by cross-class interpolation")
    return out


def expand_within(
    pset: PerturbationSet,
    target_counts: Sequence[int],
    alphas: Sequence[float] = DEFAULT_ALPHA_GRID,
    seed: int = 0,
) -> PerturbationSet:
    """Grow every class to target_counts[k] members by within-class interpolation."""
    target_counts = np.asarray(target_counts, dtype=np.int64)
    counts = pset.class_counts()
    new_deltas, new_labels = [], []
    draw_seed = seed
    for k in range(pset.K):
        need = int(target_counts[k] - counts[k]) if k < target_counts.size else 0
        alpha_iter = cycle(alphas)
        for _ in range(max(need, 0)):
            new_deltas.append(interpolate_within(pset, k, next(alpha_iter), pair_seed=draw_seed))
            new_labels.append(k)
            draw_seed += 1
    if not new_deltas:
        return pset
    logging.info(f"Expanded perturbation set from {pset.n} to {pset.n + len(new_deltas)} by within-class interpolation")
    return make_perturbation_set(
        np.concatenate([pset.deltas, np.stack(new_deltas)]),
        np.concatenate([pset.labels, np.asarray(new_labels, dtype=np.int64)]),
        pset.epsilon,
        K=pset.K,
        source_name=pset.source_name,
    )


# Synthetic noise baseline ---------------------------------------------------

def synth_sn(
    labels: np.ndarray,
    K: int,
    shape: Tuple[int, int, int],
    epsilon: float,
    patch_size: int,
    seed: int,
    source_name: str = "source",
) -> PerturbationSet:
    """
    One pattern per class: a random +-epsilon patch of patch_size^2 pixels per
    channel, tiled across the image (cropped when the side is not a multiple).
    Every sample of class k carries exactly pattern k, so intra-class spread is 0.
    """
    c, h, w = shape
    if patch_size < 1 or patch_size > min(h, w):
        raise BadConfig(f"patch_size must be in [1, {min(h, w)}], got {patch_size}")
    if K < 2:
        raise BadConfig(f"K must be >= 2, got {K}")
    if 2 ** min(c * patch_size * patch_size, 62) < K:
        raise BadConfig(f"patch_size={patch_size} cannot give {K} distinct sign patterns")
    draw = rng_for(seed, STREAM_ASSIGN)
    reps = (-(-h // patch_size), -(-w // patch_size))
    patterns: List[np.ndarray] = []
    while len(patterns) < K:
        signs = draw.choice(np.array([-1.0, 1.0]), size=(c, patch_size, patch_size))
        # redraw until distinct from earlier classes
        if any(np.array_equal(signs, p) for p in patterns):
            continue
        patterns.append(signs)
    tiles = np.stack([np.tile(p, (1,) + reps)[:, :h, :w].reshape(-1) for p in patterns]) * epsilon
    labels = np.asarray(labels, dtype=np.int64)
    return make_perturbation_set(tiles[labels], labels, epsilon, K=K, source_name=source_name)


# TUEP codec -----------------------------------------------------------------

def perturbations_to_bytes(pset: PerturbationSet) -> bytes:
    header = _HEADER.pack(PERTURBATION_MAGIC, FORMAT_VERSION, pset.n, pset.d, pset.K, pset.epsilon)
    return b"".join([
        header,
        np.ascontiguousarray(pset.labels, dtype="<i4").tobytes(),
        np.ascontiguousarray(pset.deltas, dtype="<f4").tobytes(),
    ])


def perturbations_from_bytes(payload: bytes, source_name: str = "source") -> PerturbationSet:
    if len(payload) < _HEADER.size:
        raise FormatError("truncated TUEP file (header)")
    magic, version, n, d, K, epsilon = _HEADER.unpack_from(payload, 0)
    if magic != PERTURBATION_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {PERTURBATION_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported TUEP version {version}")
    expected = _HEADER.size + 4 * n + 4 * n * d
    if len(payload) != expected:
        raise FormatError(f"TUEP length {len(payload)} != expected {expected}")
    labels = np.frombuffer(payload, dtype="<i4", count=n, offset=_HEADER.size).astype(np.int64)
    deltas = np.frombuffer(payload, dtype="<f4", count=n * d, offset=_HEADER.size + 4 * n)
    try:
        return make_perturbation_set(deltas.astype(np.float64).reshape(n, d), labels, epsilon, K, source_name)
    except BadConfig as e:
        raise FormatError(f"invalid TUEP content: {e}") from e


def save_perturbations(pset: PerturbationSet, path: Union[str, Path]) -> Path:
    out = atomic_write_bytes(path, perturbations_to_bytes(pset))
    logging.info(f"Wrote {pset.n} perturbations (K={pset.K}, eps={pset.epsilon:.6f}) to {out}")
    return out


def load_perturbations(path: Union[str, Path]) -> PerturbationSet:
    path = Path(path)
    return perturbations_from_bytes(path.read_bytes(), source_name=path.stem)
