"""SGD with classical momentum and learning-rate schedules."""
import math
from typing import Dict, Optional, Tuple

import numpy as np

from tue_lab.core.errors import ShapeMismatch

Params = Dict[str, np.ndarray]


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def sgd_step(
    params: Params,
    grads: Params,
    lr: float,
    momentum_state: Optional[Params] = None,
    momentum: float = 0.0,
) -> Tuple[Params, Params]:
    """
    v <- momentum * v + g;  w <- w - lr * v.
    Returns new (params, momentum_state); the inputs are not modified.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if momentum_state is None:
        momentum_state = zeros_like_params(params)
    new_params: Params = {}
    new_state: Params = {}
    for key, w in params.items():
        g = grads.get(key)
        v = momentum_state.get(key)
        if g is None or v is None or g.shape != w.shape or v.shape != w.shape:
            raise ShapeMismatch(f"parameter '{key}' {w.shape} has no matching gradient/momentum")
        v_next = momentum * v + g
        new_state[key] = v_next
        new_params[key] = w - lr * v_next
    return new_params, new_state


def scheduled_lr(base_lr: float, epoch: int, total_epochs: int, schedule: str = "constant") -> float:
    """
    Learning rate for `epoch` (0-based). "cosine" anneals from base_lr towards 0
    over total_epochs; "constant" returns base_lr.
    """
    if schedule == "constant" or total_epochs <= 0:
        return base_lr
    if schedule == "cosine":
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))
    raise ValueError(f"Unknown learning rate schedule: {schedule}")
