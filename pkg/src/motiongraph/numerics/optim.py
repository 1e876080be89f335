"""AdamW with a cosine learning-rate decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Parameter


def cosine_lr(step: int, total_steps: int, base_lr: float = 1e-3, final_lr: float = 1e-5) -> float:
    """Cosine interpolation from ``base_lr`` at step 0 to ``final_lr`` at ``total_steps``.

    Steps past the end are clamped to ``final_lr``.
    """
    if total_steps <= 0:
        return final_lr
    s = min(max(step, 0), total_steps)
    return final_lr + 0.5 * (base_lr - final_lr) * (1.0 + math.cos(math.pi * s / total_steps))


@dataclass
class OptimizerState:
    total_steps: int
    base_lr: float = 1e-3
    final_lr: float = 1e-5
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def lr(self) -> float:
        return cosine_lr(self.step, self.total_steps, self.base_lr, self.final_lr)


def adamw_step(params: Sequence[Parameter], state: OptimizerState) -> float:
    """Apply one decoupled-weight-decay Adam update in place; returns the learning rate used.

    Gradients are left untouched; the caller zeroes them.
    """
    lr = state.lr
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p in params:
        key = p.name or str(id(p))
        m = state.first_moment.get(key)
        if m is None:
            m = state.first_moment[key] = np.zeros_like(p.data)
            state.second_moment[key] = np.zeros_like(p.data)
        v = state.second_moment[key]
        if m.shape != p.shape:
            raise ValueError(f"optimizer state for {key} has shape {m.shape}, parameter {p.shape}")
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        value = p.data * (1.0 - lr * state.weight_decay)
        value = value - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.assign(value)
    return lr
