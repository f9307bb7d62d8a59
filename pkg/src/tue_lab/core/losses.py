"""Cross-entropy, NT-Xent and Classwise Separability Discriminant, with gradients."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from tue_lab.configs.constants import CSD_EPSILON_FLOOR, DEFAULT_TEMPERATURE
from tue_lab.core.errors import BadTemperature, ClassTooSmall, CollapsedCentroids, ShapeMismatch
from tue_lab.core.kernel import DenseArray, as_dense


def _log_softmax(logits: DenseArray) -> DenseArray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: DenseArray, labels: np.ndarray) -> Tuple[float, DenseArray]:
    """
    Mean negative log-softmax probability of the true class over the batch,
    and its gradient with respect to the logits.
    """
    logits = as_dense(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"logits {logits.shape} do not match labels {labels.shape}")
    b, k = logits.shape
    if b == 0:
        return 0.0, np.zeros_like(logits)
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeMismatch(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    logp = _log_softmax(logits)
    rows = np.arange(b)
    loss = float(-logp[rows, labels].mean())
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return loss, grad / b


def nt_xent(projections: DenseArray, temperature: float = DEFAULT_TEMPERATURE) -> Tuple[float, DenseArray]:
    """
    SimCLR NT-Xent over 2b projections where rows 2i and 2i+1 are the two views
    of sample i. Similarities are plain dot products, i.e. cosine similarities
    for the unit-norm rows this loss expects; normalization is the encoder's job.

    Returns the mean loss over all 2b anchors and its gradient with respect to
    the projections.
    """
    if not temperature > 0:
        raise BadTemperature(f"temperature must be positive, got {temperature}")
    z = as_dense(projections)
    if z.ndim != 2 or z.shape[0] % 2 != 0:
        raise ShapeMismatch(f"nt_xent expects an even number of rows, got shape {z.shape}")
    n = z.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(z)
    sim = (z @ z.T) / temperature
    np.fill_diagonal(sim, -np.inf)
    positive = np.arange(n) ^ 1
    row_max = sim.max(axis=1, keepdims=True)
    weights = np.exp(sim - row_max)
    denom = weights.sum(axis=1, keepdims=True)
    log_denom = np.log(denom[:, 0]) + row_max[:, 0]
    rows = np.arange(n)
    loss = float(np.mean(log_denom - sim[rows, positive]))

    # dL/dS[a, k] = (softmax_a(k) - [k == positive(a)]) / n, zero on the diagonal
    g = weights / denom
    g[rows, positive] -= 1.0
    g /= n
    grad = ((g + g.T) @ z) / temperature
    return loss, grad


@dataclass(frozen=True)
class CsdReport:
    """Per-class statistics behind the Classwise Separability Discriminant."""
    classes: np.ndarray  # class ids in ascending order; row k of every array belongs to classes[k]
    centroids: DenseArray  # M x d
    intra: DenseArray  # M, mean distance to own centroid
    inter: DenseArray  # M x M centroid distances, diagonal 0
    csd: float
    floored: bool = False

    @property
    def M(self) -> int:
        return int(self.classes.size)


def csd(
    perturbations: DenseArray,
    labels: np.ndarray,
    epsilon_floor: float = CSD_EPSILON_FLOOR,
    allow_floor: bool = False,
) -> Tuple[CsdReport, DenseArray]:
    """
    Classwise Separability Discriminant of a labeled perturbation set:

        csd = 1/M sum_i 1/(M-1) sum_{j != i} (sigma_i + sigma_j) / d_ij

    with sigma_k the mean Euclidean distance of class k to its centroid and d_ij
    the distance between centroids. Lower means tighter and farther apart classes.

    Raises CollapsedCentroids when some d_ij < epsilon_floor, unless allow_floor,
    in which case d_ij is floored and the report is marked `floored`.
    A sample sitting exactly on its centroid contributes a zero subgradient.
    """
    delta = as_dense(perturbations)
    labels = np.asarray(labels, dtype=np.int64)
    if delta.ndim != 2 or labels.shape != (delta.shape[0],):
        raise ShapeMismatch(f"perturbations {delta.shape} do not match labels {labels.shape}")
    classes, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    M = classes.size
    if M < 2:
        raise ClassTooSmall(f"csd needs at least 2 classes, got {M}")
    n, d = delta.shape

    # ordered reductions: np.add.at accumulates rows in index order
    sums = np.zeros((M, d), dtype=np.float64)
    np.add.at(sums, inverse, delta)
    centroids = sums / counts[:, None]

    resid = delta - centroids[inverse]
    dist = np.sqrt(np.sum(resid * resid, axis=1))
    dist_sums = np.zeros(M, dtype=np.float64)
    np.add.at(dist_sums, inverse, dist)
    sigma = dist_sums / counts

    diff = centroids[:, None, :] - centroids[None, :, :]
    inter = np.sqrt(np.sum(diff * diff, axis=2))
    off = ~np.eye(M, dtype=bool)
    floored = False
    if np.any(inter[off] < epsilon_floor):
        i, j = np.argwhere((inter < epsilon_floor) & off)[0]
        if not allow_floor:
            raise CollapsedCentroids(int(classes[i]), int(classes[j]), float(inter[i, j]))
        logging.warning(f"csd: flooring centroid distance of classes {classes[i]} and {classes[j]} to {epsilon_floor}")
        floored = True
    low = (inter < epsilon_floor) & off
    safe = np.where(off, np.maximum(inter, epsilon_floor), 1.0)

    a = 1.0 / (M * (M - 1))
    pair = np.where(off, (sigma[:, None] + sigma[None, :]) / safe, 0.0)
    value = float(a * pair.sum())

    # d csd / d sigma_k = a * sum_{j != k} 2 / d_kj
    dsigma = a * 2.0 * np.where(off, 1.0 / safe, 0.0).sum(axis=1)
    # d csd / d c_k through the distances; floored pairs are constants
    coef = np.where(off & ~low, -2.0 * a * (sigma[:, None] + sigma[None, :]) / safe ** 3, 0.0)
    dcent = np.einsum("kj,kjd->kd", coef, diff)

    unit = np.zeros_like(resid)
    nz = dist > 0.0
    unit[nz] = resid[nz] / dist[nz, None]
    unit_sums = np.zeros((M, d), dtype=np.float64)
    np.add.at(unit_sums, inverse, unit)
    unit_mean = unit_sums / counts[:, None]

    inv_counts = 1.0 / counts[inverse]
    grad = (dsigma[inverse] * inv_counts)[:, None] * (unit - unit_mean[inverse])
    grad += inv_counts[:, None] * dcent[inverse]

    report = CsdReport(
        classes=classes,
        centroids=centroids,
        intra=sigma,
        inter=inter,
        csd=value,
        floored=floored,
    )
    return report, grad


def tue_objective(
    projections: DenseArray,
    temperature: float,
    perturbations: DenseArray,
    labels: np.ndarray,
    lam: float,
    backprop: Optional[Callable[[DenseArray], DenseArray]] = None,
    epsilon_floor: float = CSD_EPSILON_FLOOR,
    allow_floor: bool = False,
) -> Tuple[float, DenseArray]:
    """
    L_CL + lam * L_S and its gradient with respect to every perturbation.

    `backprop` maps the NT-Xent gradient on the projections to a gradient on the
    perturbations (through the encoder and the augmentations); without it the
    contrastive term contributes no gradient. The CSD term is differentiated
    directly. With lam == 0 the CSD term is not evaluated at all.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    delta = as_dense(perturbations)
    value, grad_proj = nt_xent(projections, temperature)
    if backprop is None:
        grad = np.zeros_like(delta)
    else:
        grad = as_dense(backprop(grad_proj))
        if grad.shape != delta.shape:
            raise ShapeMismatch(f"backprop returned {grad.shape}, expected {delta.shape}")
    if lam > 0:
        report, grad_s = csd(delta, labels, epsilon_floor=epsilon_floor, allow_floor=allow_floor)
        value += lam * report.csd
        grad = grad + lam * grad_s
    return value, grad
