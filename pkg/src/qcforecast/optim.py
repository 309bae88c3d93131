"""Momentum SGD with cosine-decayed step size.

Parameters are plain float64 arrays updated in place; every training loop in
the package shares this one update rule.
"""

from __future__ import annotations

import math

import numpy as np


class MomentumSgd:
    def __init__(self, params: list[np.ndarray], learning_rate: float, total_epochs: int,
                 momentum: float = 0.9):
        if learning_rate <= 0.0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        if total_epochs <= 0:
            raise ValueError(f"epoch count must be positive, got {total_epochs}")
        self.params = params
        self.base_rate = learning_rate
        self.total_epochs = total_epochs
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def rate_at(self, epoch: int) -> float:
        """Cosine decay from the base rate to 0 across the configured epochs."""
        frac = min(epoch / self.total_epochs, 1.0)
        return 0.5 * self.base_rate * (1.0 + math.cos(math.pi * frac))

    def step(self, grads: list[np.ndarray], epoch: int) -> None:
        lr = self.rate_at(epoch)
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p -= lr * v
