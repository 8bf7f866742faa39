"""AdamW with decoupled weight decay."""

from __future__ import annotations

import numpy as np


def adamw_step(param, grad, m, v, t: int, lr=2e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
    """One in-place AdamW update of ``param`` with moment buffers ``m`` and ``v``.

    Weight decay shrinks the weights directly (``w *= 1 - lr * wd``) and never
    enters the moment estimates.
    """
    if t < 1:
        raise ValueError("step counter starts at 1")
    param *= 1 - lr * weight_decay
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)
    return param


class AdamW:
    def __init__(self, params: dict[str, np.ndarray], lr=2e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]):
        self.t += 1
        b1, b2 = self.betas
        for name, p in self.params.items():
            adamw_step(p, grads[name], self.m[name], self.v[name], self.t,
                       lr=self.lr, beta1=b1, beta2=b2, eps=self.eps, weight_decay=self.weight_decay)
