"""Generic N-BEATS: doubly residual stacks of fully connected blocks.

Each block maps its input through four ReLU-separated linear layers, projects
the fourth hidden state to backcast and forecast coefficients, and expands
them through learnable basis matrices (initialised to identity).
Multichannel input is flattened row-major, so the block input width is
``n_series * L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .numerics import Tensor, ShapeError, relu, reshape


def _uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class Linear:
    weight: Tensor  # (in, out)
    bias: Tensor  # (out,)

    @classmethod
    def create(cls, rng: np.random.Generator, n_in: int, n_out: int) -> "Linear":
        return cls(
            Tensor(_uniform_init(rng, n_in, (n_in, n_out)), requires_grad=True),
            Tensor(np.zeros(n_out), requires_grad=True),
        )

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


@dataclass
class Block:
    """Four FC layers, two coefficient projections, two basis matrices.

    ``n_theta_f`` equals the horizon for N-BEATS; N-HiTS blocks use fewer
    forecast coefficients and interpolate them up to the horizon before the
    forecast basis is applied.
    """

    fc: list[Linear]
    theta_b: Linear
    theta_f: Linear
    basis_b: Tensor  # (L_flat, L_flat)
    basis_f: Tensor  # (H, H)

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        n_in: int,
        width: int,
        backcast_size: int,
        horizon: int,
        n_theta_f: int | None = None,
        n_layers: int = 4,
    ) -> "Block":
        sizes = [n_in] + [width] * n_layers
        fc = [Linear.create(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        return cls(
            fc,
            Linear.create(rng, width, backcast_size),
            Linear.create(rng, width, horizon if n_theta_f is None else n_theta_f),
            Tensor(np.eye(backcast_size), requires_grad=True),
            Tensor(np.eye(horizon), requires_grad=True),
        )

    @property
    def n_in(self) -> int:
        return self.fc[0].weight.shape[0]

    @property
    def backcast_size(self) -> int:
        return self.basis_b.shape[0]

    @property
    def horizon(self) -> int:
        return self.basis_f.shape[0]

    def hidden(self, x: Tensor) -> Tensor:
        h = x
        for i, layer in enumerate(self.fc):
            h = layer(h)
            if i < len(self.fc) - 1:
                h = relu(h)
        return h

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for i, layer in enumerate(self.fc):
            yield from layer.named_parameters(f"{prefix}.fc{i + 1}")
        yield from self.theta_b.named_parameters(f"{prefix}.theta_b")
        yield from self.theta_f.named_parameters(f"{prefix}.theta_f")
        yield f"{prefix}.basis_b", self.basis_b
        yield f"{prefix}.basis_f", self.basis_f


def block_forward(block: Block, x: Tensor) -> tuple[Tensor, Tensor]:
    """Return ``(backcast, forecast)`` for input of width ``block.n_in``, batched or not."""
    if x.shape[-1] != block.n_in:
        raise ShapeError(f"block expects input width {block.n_in}, got {x.shape}")
    single = x.data.ndim == 1
    h4 = block.hidden(reshape(x, (1, block.n_in)) if single else x)
    backcast = block.theta_b(h4) @ block.basis_b
    forecast = block.theta_f(h4) @ block.basis_f
    if single:
        return reshape(backcast, (block.backcast_size,)), reshape(forecast, (block.horizon,))
    return backcast, forecast


@dataclass
class Stack:
    blocks: list[Block]

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("a stack needs at least one block")


def stack_forward(stack: Stack, x: Tensor, trace: list | None = None) -> tuple[Tensor, Tensor]:
    """Chain blocks on the running residual; return ``(residual, forecast_sum)``.

    When ``trace`` is a list, each block's ``(backcast, forecast)`` is
    appended to it.
    """
    residual, total = x, None
    for block in stack.blocks:
        backcast, forecast = block_forward(block, residual)
        if trace is not None:
            trace.append((backcast, forecast))
        residual = residual - backcast
        total = forecast if total is None else total + forecast
    return residual, total


def _as_batch(x: Tensor, n_series: int, L: int) -> tuple[Tensor, bool]:
    if x.shape == (n_series, L):
        return reshape(x, (1, n_series, L)), True
    if x.data.ndim == 3 and x.shape[1:] == (n_series, L):
        return x, False
    raise ShapeError(f"expected input of shape ({n_series}, {L}) or (B, {n_series}, {L}), got {x.shape}")


class BaseForecaster:
    """Shared plumbing for residual-stack forecasters."""

    kind = "base"
    n_series: int
    L: int
    H: int
    stacks: list[Stack]

    @property
    def L_flat(self) -> int:
        return self.n_series * self.L

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for s, stack in enumerate(self.stacks):
            for b, block in enumerate(stack.blocks):
                yield from block.named_parameters(f"stack{s}.block{b}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def forward(self, x: Tensor, trace: list | None = None) -> tuple[Tensor, Tensor]:
        """Forecast ``(B, H)`` and final residual ``(B, L_flat)`` for ``(B, N, L)`` input.

        Unbatched ``(N, L)`` input gives ``(H,)`` and ``(L_flat,)``.
        """
        xb, single = _as_batch(x, self.n_series, self.L)
        forecast, residual = self._forward(xb, trace)
        if single:
            forecast = reshape(forecast, (self.H,))
            residual = reshape(residual, (self.L_flat,))
        return forecast, residual

    def forecast(self, x: Tensor) -> Tensor:
        return self.forward(x)[0]

    __call__ = forecast

    def _forward(self, x: Tensor, trace: list | None) -> tuple[Tensor, Tensor]:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError


class NBeatsModel(BaseForecaster):
    kind = "nbeats"

    def __init__(
        self,
        n_series: int,
        L: int = 72,
        H: int = 36,
        n_stacks: int = 3,
        n_blocks: int = 3,
        width: int = 128,
        seed: int = 0,
    ):
        self.n_series, self.L, self.H = n_series, L, H
        self.n_stacks, self.n_blocks, self.width = n_stacks, n_blocks, width
        rng = np.random.default_rng(seed)
        self.stacks = [
            Stack([Block.create(rng, self.L_flat, width, self.L_flat, H) for _ in range(n_blocks)])
            for _ in range(n_stacks)
        ]

    def _forward(self, x: Tensor, trace: list | None) -> tuple[Tensor, Tensor]:
        residual = reshape(x, (x.shape[0], self.L_flat))
        forecast = None
        for stack in self.stacks:
            residual, f = stack_forward(stack, residual, trace)
            forecast = f if forecast is None else forecast + f
        return forecast, residual

    def config(self) -> dict:
        return dict(
            n_series=self.n_series, L=self.L, H=self.H,
            n_stacks=self.n_stacks, n_blocks=self.n_blocks, width=self.width,
        )


def nbeats_forward(model: NBeatsModel, x: Tensor) -> tuple[Tensor, Tensor]:
    return model.forward(x)
