"""Adam optimizer over named parameter blocks.

The update is written with preallocated scratch buffers and in-place
ufuncs; at these parameter counts temporary allocation would otherwise
dominate a training step.
"""

from __future__ import annotations

import numpy as np


class NonFiniteGradientError(RuntimeError):
    def __init__(self, block: str):
        super().__init__(f"non-finite gradient in parameter block '{block}'")
        self.block = block


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self._scratch = {k: np.empty_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p)
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(name)
            m, v, s = self.m[name], self.v[name], self._scratch[name]
            np.multiply(g, 1.0 - self.beta1, out=s)
            m *= self.beta1
            m += s
            np.multiply(g, g, out=s)
            s *= 1.0 - self.beta2
            v *= self.beta2
            v += s
            np.divide(v, b2c, out=s)
            np.sqrt(s, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= self.lr / b1c
            p -= s
