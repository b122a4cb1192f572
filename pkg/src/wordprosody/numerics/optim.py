from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class TrainingSchedule:
    base_lr: float = 1e-3
    decay_factor: float = 0.98
    decay_interval_steps: int = 1
    total_steps: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 < self.decay_factor <= 1:
            raise ValueError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.decay_interval_steps < 1:
            raise ValueError(f"decay_interval_steps must be >= 1, got {self.decay_interval_steps}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")

    def lr_at(self, step: int) -> float:
        return self.base_lr * self.decay_factor ** (step // self.decay_interval_steps)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], schedule: TrainingSchedule,
              state: AdamState, step: int) -> AdamState:
    """One bias-corrected Adam update, in place on ``params``.

    ``step`` is 1-based (bias correction uses it); the learning rate is taken
    from the schedule at ``step - 1`` so the first update uses ``base_lr``.
    """
    if step <= 0:
        raise ValueError(f"Adam step index must be >= 1, got {step}")
    b1, b2, eps = schedule.adam_beta1, schedule.adam_beta2, schedule.adam_eps
    lr = schedule.lr_at(step - 1)
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.step = step
    return state
