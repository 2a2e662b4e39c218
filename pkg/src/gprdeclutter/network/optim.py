"""Adam optimizer and the step learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 40
    epochs: int = 100
    lr0: float = 1e-4
    lr_decay_every: int = 30  # epochs
    lr_decay_factor: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "combined"
    max_steps: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("initial learning rate must be positive")


def lr_at_epoch(epoch: int, cfg: TrainConfig) -> float:
    """lr0 scaled down by the decay factor every lr_decay_every epochs."""
    return cfg.lr0 * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


class Adam:
    """Standard Adam with bias correction; state is kept per parameter name."""

    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2, eps = self.cfg.beta1, self.cfg.beta2, self.cfg.eps
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + eps)
            p -= (lr * update).astype(p.dtype, copy=False)
