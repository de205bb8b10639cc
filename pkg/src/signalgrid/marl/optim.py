"""Adam optimizer with per-group learning rates and global-norm clipping."""

from __future__ import annotations

import numpy as np

from ..nn.autodiff import Tensor


def clip_grad_norm(params: list[tuple[str, Tensor]], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most
    ``max_norm``; returns the pre-clip norm."""
    total = 0.0
    for _, t in params:
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for _, t in params:
            if t.grad is not None:
                t.grad *= scale
    return norm


class Adam:
    """First/second-moment adaptive steps; ``groups`` maps parameter name
    to a group label and ``lrs`` maps group label to its base rate."""

    def __init__(self, params: list[tuple[str, Tensor]], groups: dict[str, str],
                 lrs: dict[str, float], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.groups = groups
        self.lrs = dict(lrs)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params}
        self.v = {name: np.zeros_like(t.data) for name, t in params}

    def step(self, lr_scale: float = 1.0) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for name, t in self.params:
            if t.grad is None:
                continue
            g = t.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            lr = self.lrs[self.groups[name]] * lr_scale
            t.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for _, t in self.params:
            t.zero_grad()
