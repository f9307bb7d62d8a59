from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from tue_lab.core.errors import BadConfig, ShapeMismatch
from tue_lab.core.kernel import DenseArray, SeededRng

ImageShape = Tuple[int, int, int]  # (channels, height, width)


@dataclass(frozen=True)
class AugmentationPair:
    """
    Parameters of the two random views T_1, T_2 used by contrastive learning.
    Both views are drawn from the same family with independent randomness.
    """
    crop_pad: int = 0
    flip_prob: float = 0.0
    jitter_std: float = 0.0
    pad_value: float = 0.0

    def validate(self) -> "AugmentationPair":
        if self.crop_pad < 0:
            raise BadConfig(f"crop_pad must be >= 0, got {self.crop_pad}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise BadConfig(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if self.jitter_std < 0:
            raise BadConfig(f"jitter_std must be >= 0, got {self.jitter_std}")
        return self

    @property
    def is_identity(self) -> bool:
        return self.crop_pad == 0 and self.flip_prob == 0.0 and self.jitter_std == 0.0


def pad_image(
    img: np.ndarray,
    pad: int,
    pad_value: Union[int, float],
) -> np.ndarray:
    """
    Pad (H,W) or (C,H,W) by `pad` pixels on every side.
    """
    if pad == 0:
        return img
    if img.ndim == 2:
        return np.pad(img, ((pad, pad), (pad, pad)), mode="constant", constant_values=pad_value)
    if img.ndim == 3:
        return np.pad(img, ((0, 0), (pad, pad), (pad, pad)), mode="constant", constant_values=pad_value)
    raise ValueError(f"Unsupported image ndim={img.ndim}")


@dataclass(frozen=True)
class ViewPlan:
    """
    One drawn view as data: `index[k]` is the source pixel of output pixel k
    (-1 where the crop reaches into padding), `noise` is the additive jitter.
    """
    index: np.ndarray
    noise: Optional[np.ndarray]


def draw_view_plan(shape: ImageShape, aug: AugmentationPair, draw: np.random.Generator) -> ViewPlan:
    """Draw crop offsets, flip and jitter, in that order."""
    c, h, w = shape
    src = np.arange(c * h * w, dtype=np.int64).reshape(c, h, w)
    if aug.crop_pad > 0:
        p = aug.crop_pad
        padded = pad_image(src, p, -1)
        top = int(draw.integers(0, 2 * p + 1))
        left = int(draw.integers(0, 2 * p + 1))
        src = padded[:, top:top + h, left:left + w]
    if aug.flip_prob > 0.0 and draw.random() < aug.flip_prob:
        src = src[:, :, ::-1]
    noise = None
    if aug.jitter_std > 0.0:
        noise = draw.normal(0.0, aug.jitter_std, size=c * h * w)
    return ViewPlan(index=np.ascontiguousarray(src).reshape(-1), noise=noise)


def _pre_clip(x: DenseArray, plan: ViewPlan, pad_value: float) -> DenseArray:
    valid = plan.index >= 0
    out = np.full(plan.index.shape, pad_value, dtype=np.float64)
    out[valid] = x[plan.index[valid]]
    if plan.noise is not None:
        out = out + plan.noise
    return out


def apply_view_plan(x: DenseArray, plan: ViewPlan, pad_value: float = 0.0) -> DenseArray:
    return np.clip(_pre_clip(x, plan, pad_value), 0.0, 1.0)


def view_plan_backward(
    grad_view: DenseArray,
    x: DenseArray,
    plan: ViewPlan,
    pad_value: float = 0.0,
) -> DenseArray:
    """
    Pull a gradient on the view back to the source image. Clipped pixels pass
    no gradient; padded pixels have no source.
    """
    pre = _pre_clip(x, plan, pad_value)
    passing = (pre >= 0.0) & (pre <= 1.0) & (plan.index >= 0)
    grad_x = np.zeros(x.shape, dtype=np.float64)
    np.add.at(grad_x, plan.index[passing], grad_view[passing])
    return grad_x


def augment(
    x: DenseArray,
    aug: AugmentationPair,
    draw: Union[np.random.Generator, SeededRng],
    shape: ImageShape,
) -> Tuple[DenseArray, DenseArray]:
    """
    Draw two independently randomized views of the flat image `x`.

    `draw` is consumed in a fixed order (view 1 then view 2), so replaying the
    same generator state replays the same views. The identity configuration
    consumes no randomness and returns exact copies.
    """
    if isinstance(draw, SeededRng):
        draw = draw.generator()
    c, h, w = shape
    x = np.asarray(x, dtype=np.float64)
    if x.size != c * h * w:
        raise ShapeMismatch(f"image of {x.size} values does not match shape {shape}")
    first = draw_view_plan(shape, aug, draw)
    second = draw_view_plan(shape, aug, draw)
    return apply_view_plan(x, first, aug.pad_value), apply_view_plan(x, second, aug.pad_value)


def draw_batch_plans(b: int, shape: ImageShape, aug: AugmentationPair, draw: np.random.Generator) -> List[ViewPlan]:
    """Plans for 2b views; entries 2i and 2i+1 belong to sample i."""
    return [draw_view_plan(shape, aug, draw) for _ in range(2 * b)]


def apply_batch_plans(batch: DenseArray, plans: List[ViewPlan], pad_value: float = 0.0) -> DenseArray:
    out = np.empty((len(plans), batch.shape[1]), dtype=np.float64)
    for k, plan in enumerate(plans):
        out[k] = apply_view_plan(batch[k // 2], plan, pad_value)
    return out


def batch_plans_backward(
    grad_views: DenseArray,
    batch: DenseArray,
    plans: List[ViewPlan],
    pad_value: float = 0.0,
) -> DenseArray:
    """Sum the gradients of both views of each sample back onto `batch`."""
    grad = np.zeros(batch.shape, dtype=np.float64)
    for k, plan in enumerate(plans):
        grad[k // 2] += view_plan_backward(grad_views[k], batch[k // 2], plan, pad_value)
    return grad


def augment_batch(
    batch: DenseArray,
    aug: AugmentationPair,
    draw: np.random.Generator,
    shape: ImageShape,
) -> DenseArray:
    """
    Augment every row of `batch` (b x d) and interleave the views:
    rows 2i and 2i+1 of the result are the two views of sample i.
    """
    return apply_batch_plans(batch, draw_batch_plans(batch.shape[0], shape, aug, draw), aug.pad_value)
