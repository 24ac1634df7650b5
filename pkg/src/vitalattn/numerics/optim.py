"""Adam optimiser and global-norm gradient clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, p: Tensor, **hyper) -> "AdamState":
        return cls(np.zeros_like(p.data), np.zeros_like(p.data), **hyper)


def adam_step(params: Sequence[Tensor], states: Sequence[AdamState]) -> None:
    """Apply one bias-corrected Adam update in place and clear the gradients."""
    if len(params) != len(states):
        raise ValueError(f"adam_step: {len(params)} params but {len(states)} states")
    for i, p in enumerate(params):
        if p.grad is None:
            label = p.name or f"#{i}"
            raise RuntimeError(f"adam_step: parameter {label} has no gradient")
    for p, s in zip(params, states):
        g = p.grad
        s.t += 1
        s.m *= s.beta1
        s.m += (1.0 - s.beta1) * g
        s.v *= s.beta2
        s.v += (1.0 - s.beta2) * (g * g)
        m_hat = s.m / (1.0 - s.beta1**s.t)
        v_hat = s.v / (1.0 - s.beta2**s.t)
        p.data -= s.lr * m_hat / (np.sqrt(v_hat) + s.eps)
        p.grad = None


@dataclass
class Adam:
    params: list[Tensor]
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    states: list[AdamState] = field(init=False)

    def __post_init__(self):
        self.states = [
            AdamState.for_param(p, lr=self.lr, beta1=self.betas[0], beta2=self.betas[1], eps=self.eps)
            for p in self.params
        ]

    def step(self) -> None:
        adam_step(self.params, self.states)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Rescale gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return total
