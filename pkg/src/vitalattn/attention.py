"""Model-agnostic attention head over the input history.

Queries come from the base model's forecast, keys and values from the raw
input, one L x L projection per series. Every scalar forecast step attends
over the L scalar history steps of each series, so the weights ``D`` have
shape ``(N, H, L)``. The head output is layer-normalised, passed through a
linear layer and added to the base forecast. The output layer starts at
zero, so a fresh wrapper reproduces its base model exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .nbeats import BaseForecaster, _as_batch
from .numerics import ShapeError, Tensor, layer_norm, reshape, softmax_rows

LN_EPS = 1e-5


@dataclass
class AttentionParams:
    W_K: Tensor  # (N, L, L)
    b_K: Tensor  # (N, L)
    W_V: Tensor  # (N, L, L)
    W_Q: Tensor  # (H, H)
    b_Q: Tensor  # (H,)
    ln_gain: Tensor  # (N*H,)
    ln_bias: Tensor  # (N*H,)
    out_w: Tensor  # (N*H, H)
    out_b: Tensor  # (H,)

    @classmethod
    def create(cls, n_series: int, L: int, H: int, seed: int = 0) -> "AttentionParams":
        rng = np.random.default_rng(seed)
        kl, kh = 1.0 / math.sqrt(L), 1.0 / math.sqrt(H)
        p = lambda a: Tensor(a, requires_grad=True)  # noqa: E731
        return cls(
            W_K=p(rng.uniform(-kl, kl, (n_series, L, L))),
            b_K=p(np.zeros((n_series, L))),
            W_V=p(rng.uniform(-kl, kl, (n_series, L, L))),
            W_Q=p(rng.uniform(-kh, kh, (H, H))),
            b_Q=p(np.zeros(H)),
            ln_gain=p(np.ones(n_series * H)),
            ln_bias=p(np.zeros(n_series * H)),
            out_w=p(np.zeros((n_series * H, H))),
            out_b=p(np.zeros(H)),
        )

    @property
    def n_series(self) -> int:
        return self.W_K.shape[0]

    @property
    def L(self) -> int:
        return self.W_K.shape[1]

    @property
    def H(self) -> int:
        return self.W_Q.shape[0]

    def named_parameters(self, prefix: str = "attn") -> Iterator[tuple[str, Tensor]]:
        for name in ("W_K", "b_K", "W_V", "W_Q", "b_Q", "ln_gain", "ln_bias", "out_w", "out_b"):
            yield f"{prefix}.{name}", getattr(self, name)


@dataclass
class AttentionArtifacts:
    D: np.ndarray  # (N, H, L), or (B, N, H, L) for batches
    O: np.ndarray  # (N, H)
    A: np.ndarray  # (N, H, L)


def project_qkv(inputs: Tensor, base_forecast: Tensor, params: AttentionParams) -> tuple[Tensor, Tensor, Tensor]:
    """Return ``Q (B, H)``, ``K (B, N, L)``, ``V (B, N, L)`` for batched input ``(B, N, L)``."""
    B, N, L = inputs.shape
    if (N, L) != (params.n_series, params.L) or base_forecast.shape != (B, params.H):
        raise ShapeError(
            f"attention configured for N={params.n_series}, L={params.L}, H={params.H}; "
            f"got input {inputs.shape} and forecast {base_forecast.shape}"
        )
    rows = reshape(inputs, (B, N, 1, L))
    K = reshape(rows @ params.W_K, (B, N, L)) + params.b_K
    V = reshape(rows @ params.W_V, (B, N, L))
    Q = base_forecast @ params.W_Q + params.b_Q
    return Q, K, V


def scaled_dot_attention(Q: Tensor, K: Tensor, V: Tensor) -> tuple[Tensor, Tensor]:
    """Scalar-token attention: ``D[b, i, h, l] = softmax_l(Q[b, h] * K[b, i, l] / sqrt(L))``.

    Returns ``D (B, N, H, L)`` and ``O (B, N, H)``.
    """
    B, N, L = K.shape
    H = Q.shape[-1]
    scores = reshape(Q, (B, 1, H, 1)) @ reshape(K, (B, N, 1, L))
    D = softmax_rows(scores * (1.0 / math.sqrt(L)))
    O = reshape(D @ reshape(V, (B, N, L, 1)), (B, N, H))
    return D, O


def attention_map(D: np.ndarray, W_V: np.ndarray) -> np.ndarray:
    """``A[i] = D[i] @ |W_V[i]|^T`` on plain arrays; leading batch axes pass through."""
    return np.matmul(D, np.swapaxes(np.abs(W_V), -1, -2))


class AttentionForecaster:
    """Wrap any residual-stack forecaster with the attention head."""

    def __init__(self, base: BaseForecaster, params: AttentionParams | None = None, seed: int = 0):
        if params is None:
            params = AttentionParams.create(base.n_series, base.L, base.H, seed)
        if (params.n_series, params.L, params.H) != (base.n_series, base.L, base.H):
            raise ShapeError(
                f"attention params (N={params.n_series}, L={params.L}, H={params.H}) do not match "
                f"base model (N={base.n_series}, L={base.L}, H={base.H})"
            )
        self.base = base
        self.params = params

    kind = property(lambda self: self.base.kind)
    n_series = property(lambda self: self.base.n_series)
    L = property(lambda self: self.base.L)
    H = property(lambda self: self.base.H)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, p in self.base.named_parameters():
            yield f"base.{name}", p
        yield from self.params.named_parameters("attn")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def forward(self, x: Tensor) -> tuple[Tensor, AttentionArtifacts]:
        xb, single = _as_batch(x, self.n_series, self.L)
        B = xb.shape[0]
        base_fc, _ = self.base.forward(xb)
        Q, K, V = project_qkv(xb, base_fc, self.params)
        D, O = scaled_dot_attention(Q, K, V)
        z = layer_norm(reshape(O, (B, self.n_series * self.H)), self.params.ln_gain, self.params.ln_bias, LN_EPS)
        out = z @ self.params.out_w + self.params.out_b + base_fc
        A = attention_map(D.data, self.params.W_V.data)
        artifacts = AttentionArtifacts(D.data, O.data, A)
        if single:
            out = reshape(out, (self.H,))
            artifacts = AttentionArtifacts(D.data[0], O.data[0], A[0])
        return out, artifacts

    def forecast(self, x: Tensor) -> Tensor:
        return self.forward(x)[0]

    __call__ = forecast

    def config(self) -> dict:
        return self.base.config()


def attn_wrapped_forward(
    base: BaseForecaster, params: AttentionParams, x: Tensor
) -> tuple[Tensor, AttentionArtifacts]:
    return AttentionForecaster(base, params).forward(x)
