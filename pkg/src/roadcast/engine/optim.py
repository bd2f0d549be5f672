"""Adam plus the plateau learning-rate schedule and early stopping used in training."""
from __future__ import annotations

import math

import numpy as np


class Adam:
    """Bias-corrected Adam. Moments are zero-initialised per parameter."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            step = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= step.astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class PlateauSchedule:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, initial: float = 1e-4, factor: float = 0.9, patience: int = 5,
                 floor: float = 1e-6):
        if patience < 1:
            raise ValueError("patience must be positive")
        self.lr = initial
        self.factor = factor
        self.patience = patience
        self.floor = floor
        self.best = math.inf
        self.wait = 0

    def update(self, metric: float) -> float:
        if metric < self.best:
            self.best = metric
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.lr = max(self.lr * self.factor, self.floor)
                self.wait = 0
        return self.lr


class EarlyStopping:
    """Signal a stop once the metric has not improved for ``patience`` consecutive epochs."""

    def __init__(self, patience: int = 30):
        if patience < 1:
            raise ValueError("patience must be positive")
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, metric: float) -> bool:
        if metric < self.best:
            self.best = metric
            self.best_epoch = epoch
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience
