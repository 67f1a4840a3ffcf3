"""SGD with momentum under a per-epoch cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import MisuseError


def cosine_lr(base_lr: float, t: int, total: int) -> float:
    """``0.5 * base_lr * (1 + cos(pi * t / total))``: base_lr at t=0, 0 at t=total."""
    if t >= total:
        return 0.0
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * t / total))


@dataclass
class OptimizerState:
    base_lr: float = 0.05
    epochs: int = 100
    t: int = 0
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    @property
    def lr(self) -> float:
        return cosine_lr(self.base_lr, self.t, self.epochs)


def sgd_step(params, state: OptimizerState) -> None:
    """One update ``v = momentum * v + grad; p -= lr(t) * v`` then zero the grads.

    ``state.t`` is left alone; the training loop advances it once per epoch.
    """
    if state.t > state.epochs:
        raise MisuseError(f"step {state.t} is past the schedule end {state.epochs}")
    lr = state.lr
    for p in params:
        if p.grad is None:
            raise MisuseError(f"parameter {p.name or p!r} has no gradient; call backward() first")
        g = p.grad
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        key = p.name or id(p)
        v = state.velocity.get(key)
        v = g.copy() if v is None else state.momentum * v + g
        state.velocity[key] = v
        # in place so every holder of this parameter sees the update
        p.data -= lr * v
        p.grad = np.zeros_like(p.data)
