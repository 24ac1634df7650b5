"""Mini-batch Adam training with gradient clipping and early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..attention import AttentionForecaster
from ..data import SplitDataset, Window
from ..nbeats import NBeatsModel
from ..nhits import NHitsModel
from ..numerics import Adam, Tape, Tensor, backward, clip_grad_norm, mse_loss
from ..rng import derive_seed
from .config import TrainConfig

log = logging.getLogger(__name__)

# child-stream indices under TrainConfig.seed
_SEED_BASE, _SEED_ATTENTION, _SEED_SHUFFLE = 0, 1, 2


class TrainingError(RuntimeError):
    pass


def build_model(cfg: TrainConfig):
    """Freshly initialised forecaster described by ``cfg``."""
    base_seed = derive_seed(cfg.seed, _SEED_BASE)
    if cfg.model_kind == "nbeats":
        base = NBeatsModel(cfg.n_series, cfg.L, cfg.H, cfg.nbeats_stacks, cfg.nbeats_blocks, cfg.width, base_seed)
    else:
        base = NHitsModel(
            cfg.n_series, cfg.L, cfg.H, cfg.nhits_kernels, cfg.nhits_ratios, cfg.nhits_blocks, cfg.width, base_seed
        )
    if cfg.attention:
        return AttentionForecaster(base, seed=derive_seed(cfg.seed, _SEED_ATTENTION))
    return base


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainedModel:
    config: TrainConfig
    model: object
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def named_parameters(self):
        return list(self.model.named_parameters())

    @property
    def best_val_loss(self) -> float:
        return self.history[self.best_epoch].val_loss if self.history else math.inf


def stack_windows(windows: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([w.input for w in windows])
    Y = np.stack([w.target for w in windows])
    return X, Y


def predict_array(model, X: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Forecasts ``(B, H)`` for inputs ``(B, N, L)``; no gradients recorded."""
    out = []
    for i in range(0, len(X), batch_size):
        out.append(model.forecast(Tensor(X[i : i + batch_size])).data)
    return np.concatenate(out) if out else np.empty((0, model.H))


def predict(trained: TrainedModel, windows: Sequence[Window]) -> np.ndarray:
    _check_windows(trained.config, windows)
    return predict_array(trained.model, stack_windows(windows)[0])


def _check_windows(cfg: TrainConfig, windows: Sequence[Window]) -> None:
    for w in windows:
        if w.input.shape != (cfg.n_series, cfg.L) or w.target.shape != (cfg.H,):
            raise ValueError(
                f"window {w.patient_id}@{w.start} has input {w.input.shape} / target {w.target.shape}; "
                f"model expects ({cfg.n_series}, {cfg.L}) / ({cfg.H},)"
            )
        if w.channel_names != (cfg.target, *cfg.covariates):
            raise ValueError(f"window channels {w.channel_names} differ from model channels")


def train_model(cfg: TrainConfig, data: SplitDataset) -> TrainedModel:
    """Fit ``cfg`` on ``data.train``, early-stopping on ``data.validation``.

    The returned model carries the parameters of the epoch with the lowest
    validation MSE.
    """
    if not data.train:
        raise TrainingError("training split is empty")
    if not data.validation:
        raise TrainingError("validation split is empty")
    _check_windows(cfg, data.train)
    _check_windows(cfg, data.validation)
    X, Y = stack_windows(data.train)
    Xv, Yv = stack_windows(data.validation)

    model = build_model(cfg)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    shuffle = np.random.default_rng(derive_seed(cfg.seed, _SEED_SHUFFLE))
    trained = TrainedModel(cfg, model)

    best = math.inf
    best_state = [p.data.copy() for p in params]
    stale = 0
    for epoch in range(cfg.max_epochs):
        order = shuffle.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            with Tape() as tape:
                loss = mse_loss(model.forecast(Tensor(X[idx])), Tensor(Y[idx]))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"loss became non-finite in epoch {epoch}")
            backward(tape, loss, params)
            clip_grad_norm(params, cfg.grad_clip)
            opt.step()
            total += value * len(idx)
        val = float(np.mean((predict_array(model, Xv) - Yv) ** 2))
        if not math.isfinite(val):
            raise TrainingError(f"validation loss became non-finite in epoch {epoch}")
        trained.history.append(EpochRecord(epoch, total / len(X), val))
        log.debug("epoch %d train %.6g val %.6g", epoch, total / len(X), val)
        if val < best:
            best, trained.best_epoch, stale = val, epoch, 0
            best_state = [p.data.copy() for p in params]
        else:
            stale += 1
        if stale >= cfg.patience:
            break
    for p, saved in zip(params, best_state):
        p.data[...] = saved
    return trained
