"""Adam updates with a cosine-annealed, warm-up learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import ParamStore


class Adam:
    """Per-parameter second-moment scaling with bias correction."""

    def __init__(self, store: ParamStore, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.value) for name, p in store.items()}
        self._v = {name: np.zeros_like(p.value) for name, p in store.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.store.items():
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class CosineWarmupSchedule:
    """Linear warm-up over 5% of the total steps, then cosine decay to 0."""

    def __init__(self, base_lr: float, total_steps: int, warmup_frac: float = 0.05):
        self.base_lr = base_lr
        self.total_steps = max(1, total_steps)
        self.warmup_steps = max(1, int(round(warmup_frac * self.total_steps)))

    def lr(self, step: int) -> float:
        if step < self.warmup_steps:
            return self.base_lr * (step + 1) / self.warmup_steps
        span = max(1, self.total_steps - self.warmup_steps)
        progress = min(1.0, (step - self.warmup_steps) / span)
        return 0.5 * self.base_lr * (1.0 + math.cos(math.pi * progress))
