"""First-order optimizers over lists of arrays.

Both optimizers are purely functional on the parameter values: ``step`` takes
the current parameter list and gradient list and returns the updated list.
Adam keeps its running moments internally, so reusing one instance across
calls gives the usual bias-corrected behaviour; constructing a fresh instance
resets the state.
"""

from __future__ import annotations

import numpy as np


class Sgd:
    """Plain gradient descent, optionally reused for API symmetry with Adam."""

    def step(self, params: list, grads: list, lr: float) -> list:
        return [p - lr * g for p, g in zip(params, grads)]


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list | None = None
        self.v: list | None = None

    def step(self, params: list, grads: list, lr: float) -> list:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        out = []
        b1, b2 = self.beta1, self.beta2
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g**2
            m_hat = self.m[i] / (1.0 - b1**self.t)
            v_hat = self.v[i] / (1.0 - b2**self.t)
            out.append(p - lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def make_optimizer(name: str):
    if name == "adam":
        return Adam()
    if name == "gd":
        return Sgd()
    raise ValueError(f"unknown optimizer {name!r}; expected 'adam' or 'gd'")
