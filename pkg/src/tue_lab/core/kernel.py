"""Dense numeric kernel: seeded RNG streams, normalization, gradient oracle, PCA."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from tue_lab.configs.constants import ZERO_NORM_TOL, FINITE_DIFF_STEP
from tue_lab.core.errors import ZeroVector, NonFiniteValue, BadDims

# float64 ndarray; shape and row-major data are numpy's own
DenseArray = np.ndarray


def as_dense(x) -> DenseArray:
    return np.ascontiguousarray(x, dtype=np.float64)


def check_finite(x: DenseArray, what: str = "array") -> DenseArray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue(f"{what} contains NaN or Inf")
    return x


@dataclass(frozen=True)
class SeededRng:
    """
    Reproducible random stream identified by (seed, stream_id).

    Backed by the counter-based Philox bit generator, so a given pair yields the
    same sequence on every platform. Each call to `generator()` restarts the stream.
    """
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, stream_id: int) -> "SeededRng":
        return SeededRng(self.seed, stream_id)


def rng_for(seed: int, stream_id: int) -> np.random.Generator:
    return SeededRng(seed, stream_id).generator()


def l2_normalize(v: DenseArray) -> DenseArray:
    v = as_dense(v)
    if v.ndim != 1 or v.size == 0:
        raise BadDims(f"l2_normalize expects a non-empty rank-1 array, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM_TOL:
        raise ZeroVector(f"cannot normalize vector with norm {norm:.3e}")
    return v / norm


def finite_diff_grad(
    f: Callable[[DenseArray], float],
    x: DenseArray,
    h: float = FINITE_DIFF_STEP,
) -> DenseArray:
    """
    Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
    `x` may have any shape; the result has the same shape.
    """
    if h <= 0:
        raise ValueError(f"finite difference step must be positive, got {h}")
    x = as_dense(x).copy()
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        f_plus = float(f(x))
        flat_x[i] = orig - h
        f_minus = float(f(x))
        flat_x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteValue(f"non-finite probe at coordinate {i}")
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def pca_project(points: DenseArray, dims: int) -> DenseArray:
    """
    Center `points` (n x d) and project onto the top `dims` principal directions,
    ordered by decreasing variance. Each direction is signed so that its
    largest-magnitude coordinate is positive.
    """
    points = as_dense(points)
    if points.ndim != 2:
        raise BadDims(f"pca_project expects n x d points, got shape {points.shape}")
    n, d = points.shape
    if n < 1 or dims < 1 or dims > min(n, d):
        raise BadDims(f"dims={dims} out of range for {n} points in {d} dimensions")
    centered = points - points.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(n, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1][:dims]
    top = eigvecs[:, order]
    # sign convention
    for k in range(dims):
        pivot = int(np.argmax(np.abs(top[:, k])))
        if top[pivot, k] < 0:
            top[:, k] = -top[:, k]
    return centered @ top


def relative_error(a: DenseArray, b: DenseArray, floor: float = 1e-8) -> float:
    """max |a - b| / max(|a|, |b|, floor), the gradient-check metric."""
    a = as_dense(a)
    b = as_dense(b)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale
