"""N-HiTS: N-BEATS blocks fed max-pooled input, with interpolated forecasts.

Stack ``l`` pools every channel of the running residual with kernel
``k_l`` before its blocks see it, and its blocks emit ``ceil(H / r_l)``
forecast knots that are linearly interpolated to the full horizon. The
backcast stays at full resolution so residual subtraction is unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nbeats import BaseForecaster, Block, Stack
from .numerics import ShapeError, Tensor, maxpool1d, reshape


def multirate_pool(x: Tensor, k: int) -> Tensor:
    """Max-pool each channel of ``(..., N, L)`` and flatten to ``(..., N * ceil(L/k))``."""
    if k < 1:
        raise ValueError(f"pooling kernel must be >= 1, got {k}")
    if x.data.ndim < 2:
        raise ShapeError(f"multirate_pool expects (..., N, L), got {x.shape}")
    pooled = maxpool1d(x, int(k))
    lead = pooled.shape[:-2]
    return reshape(pooled, lead + (pooled.shape[-2] * pooled.shape[-1],))


def interpolation_matrix(c: int, H: int) -> np.ndarray:
    """``(c, H)`` matrix whose rows hold each knot's linear-interpolation weights."""
    if not 1 <= c <= H:
        raise ValueError(f"need 1 <= c <= H, got c={c}, H={H}")
    if c == 1:
        return np.ones((1, H))
    if c == H:
        return np.eye(H)
    pos = np.arange(H) * (c - 1) / (H - 1)
    lo = np.minimum(np.floor(pos).astype(int), c - 2)
    frac = pos - lo
    M = np.zeros((c, H))
    cols = np.arange(H)
    M[lo, cols] = 1.0 - frac
    M[lo + 1, cols] += frac
    return M


def interpolate_coeffs(theta: Tensor, H: int) -> Tensor:
    """Linearly interpolate ``c`` knots placed evenly over ``H`` horizon steps."""
    c = theta.shape[-1]
    if c < 1:
        raise ValueError("need at least one coefficient")
    if c == H:
        return theta
    squeeze = theta.data.ndim == 1
    t = reshape(theta, (1, c)) if squeeze else theta
    out = t @ Tensor(interpolation_matrix(c, H))
    return reshape(out, (H,)) if squeeze else out


@dataclass(frozen=True)
class NHitsStackConfig:
    kernel: int
    ratio: int
    n_blocks: int = 1
    width: int = 128

    def n_coeffs(self, H: int) -> int:
        return min(H, max(1, math.ceil(H / self.ratio)))

    def __post_init__(self):
        if self.kernel < 1 or self.ratio < 1:
            raise ValueError(f"kernel and ratio must be >= 1, got {self.kernel}, {self.ratio}")


class NHitsModel(BaseForecaster):
    kind = "nhits"

    def __init__(
        self,
        n_series: int,
        L: int = 72,
        H: int = 36,
        kernels: tuple[int, ...] = (8, 4, 1),
        ratios: tuple[int, ...] = (12, 4, 1),
        n_blocks: int = 1,
        width: int = 128,
        seed: int = 0,
    ):
        if len(kernels) != len(ratios):
            raise ValueError("kernels and ratios need one entry per stack")
        self.n_series, self.L, self.H = n_series, L, H
        self.kernels, self.ratios = tuple(kernels), tuple(ratios)
        self.n_blocks, self.width = n_blocks, width
        self.stack_configs = [NHitsStackConfig(k, r, n_blocks, width) for k, r in zip(kernels, ratios)]
        rng = np.random.default_rng(seed)
        self.stacks = []
        for cfg in self.stack_configs:
            n_in = n_series * math.ceil(L / cfg.kernel)
            blocks = [
                Block.create(rng, n_in, width, self.L_flat, H, n_theta_f=cfg.n_coeffs(H))
                for _ in range(n_blocks)
            ]
            self.stacks.append(Stack(blocks))

    def _forward(self, x: Tensor, trace: list | None) -> tuple[Tensor, Tensor]:
        B = x.shape[0]
        residual = reshape(x, (B, self.L_flat))
        forecast = None
        for cfg, stack in zip(self.stack_configs, self.stacks):
            stack_total = None
            for block in stack.blocks:
                pooled = multirate_pool(reshape(residual, (B, self.n_series, self.L)), cfg.kernel)
                h4 = block.hidden(pooled)
                backcast = block.theta_b(h4) @ block.basis_b
                knots = block.theta_f(h4)
                f = interpolate_coeffs(knots, self.H) @ block.basis_f
                if trace is not None:
                    trace.append((backcast, f))
                residual = residual - backcast
                stack_total = f if stack_total is None else stack_total + f
            forecast = stack_total if forecast is None else forecast + stack_total
        return forecast, residual

    def config(self) -> dict:
        return dict(
            n_series=self.n_series, L=self.L, H=self.H,
            kernels=list(self.kernels), ratios=list(self.ratios),
            n_blocks=self.n_blocks, width=self.width,
        )


def nhits_forward(model: NHitsModel, x: Tensor) -> tuple[Tensor, Tensor]:
    return model.forward(x)
