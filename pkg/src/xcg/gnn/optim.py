"""AdamW with a cosine-annealed learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LR_GRID = (5e-5, 1e-5, 5e-6)


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    lr_grid: tuple[float, ...] = LR_GRID
    batch_size: int = 16
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    weight_decay: float = 1e-2

    def __post_init__(self):
        self.lr_grid = tuple(float(x) for x in self.lr_grid)
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if any(x <= 0 for x in (self.learning_rate, *self.lr_grid)):
            raise ValueError("learning rates must be positive")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def cosine_lr(base_lr: float, step_index: int, total_steps: int) -> float:
    """``base_lr * (1 + cos(pi * step / total)) / 2``; multiplier 1 at step 0, 0 at the end."""
    if total_steps <= 0:
        return base_lr
    frac = min(max(step_index, 0), total_steps) / total_steps
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
               config: TrainConfig, lr: float) -> None:
    """In-place decoupled-weight-decay Adam update at learning rate ``lr``."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        p *= 1.0 - lr * config.weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + config.eps_adam)
