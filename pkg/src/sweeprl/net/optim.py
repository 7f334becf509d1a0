"""Stochastic gradient optimizers for the layer kernel."""
from __future__ import annotations

import numpy as np

from ..errors import NonFiniteGradientError


class AdamLike:
    """Adaptive-moment SGD with bias correction.

    step() applies one update to every (param, grad) pair; parameters are
    modified in place. Slot arrays are keyed by position, so the same
    parameter list must be passed on every call.
    """

    def __init__(self, learning_rate=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        for p, g, m, v in zip(params, grads, self._m, self._v):
            if not np.isfinite(g).all():
                raise NonFiniteGradientError("gradient contains NaN or Inf")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p -= (self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)


class PlainSGD:
    """Unadorned gradient descent, behind a config switch."""

    def __init__(self, learning_rate=0.001):
        if learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        self.learning_rate = float(learning_rate)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            if not np.isfinite(g).all():
                raise NonFiniteGradientError("gradient contains NaN or Inf")
            p -= (self.learning_rate * g).astype(p.dtype)


def make_optimizer(name: str, learning_rate: float):
    if name == "adam":
        return AdamLike(learning_rate)
    if name == "sgd":
        return PlainSGD(learning_rate)
    raise ValueError(f"unknown optimizer {name!r}")
