"""RMSProp without momentum or weight decay, plus global-norm clipping."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .tensor import Parameter

__all__ = ["RmsProp", "clip_grad_norm"]


class RmsProp:
    """v <- alpha*v + (1-alpha)*g^2; p <- p - lr*g/(sqrt(v)+eps).

    Parameters with no populated gradient are skipped. Gradients of stepped
    parameters are cleared after the update.
    """

    def __init__(self, params: Iterable[Parameter], lr: float = 5e-4,
                 alpha: float = 0.99, eps: float = 1e-5):
        self.params = list(params)
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {alpha}")
        self.lr = float(lr)
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.square_avg = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.square_avg):
            if p.grad is None:
                continue
            g = p.grad
            v *= self.alpha
            v += (1.0 - self.alpha) * g * g
            p.data -= self.lr * g / (np.sqrt(v) + self.eps)
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    total = float(np.sqrt(total))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total
