"""SGD with momentum and weight decay, plus the cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .ops import ShapeError
from .tensor import Tensor


@dataclass
class OptimizerState:
    momentum: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def sgd_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: OptimizerState,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
    frozen: set[str] | frozenset[str] = frozenset(),
) -> tuple[dict[str, Tensor], OptimizerState]:
    """One update ``v <- m*v + (g + wd*p); p <- p - lr*v``.

    Frozen parameters, and parameters without a gradient entry, are passed
    through untouched (same object). Returns new params and a new state.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    new_params: dict[str, Tensor] = {}
    new_mom = dict(state.momentum)
    for name, p in params.items():
        g = grads.get(name)
        if name in frozen or g is None:
            new_params[name] = p
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {name!r} {p.shape}")
        v = new_mom.get(name)
        if v is None:
            v = np.zeros(p.shape)
        elif v.shape != p.shape:
            raise ShapeError(f"momentum shape {v.shape} does not match parameter {name!r} {p.shape}")
        v = momentum * v + (g + weight_decay * p.data)
        new_mom[name] = v
        new_params[name] = Tensor._wrap(p.data - lr * v, p.name)
    return new_params, OptimizerState(new_mom, state.step + 1)


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
