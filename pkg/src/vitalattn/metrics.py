"""Forecast metrics and the persistence baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MSE_TABLE_UNIT = 1e-4
DTW_TABLE_UNIT = 1e-3
REPORT_HEADER = ("model", "covariates", "target", "mse", "mse_table", "dtw", "dtw_table", "n_windows")


def mse_horizon(pred, actual) -> float:
    pred, actual = np.asarray(pred, dtype=np.float64), np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise ValueError(f"mse_horizon: shapes differ {pred.shape} vs {actual.shape}")
    d = pred - actual
    return float(np.mean(d * d))


def dtw_distance(x, y) -> float:
    """Unconstrained DTW with absolute pointwise cost, not normalised."""
    x, y = np.asarray(x, dtype=np.float64).ravel(), np.asarray(y, dtype=np.float64).ravel()
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("dtw_distance needs two non-empty sequences")
    cost = np.abs(x[:, None] - y[None, :])
    acc = np.empty((n, m))
    acc[0, 0] = cost[0, 0]
    acc[0, 1:] = cost[0, 0] + np.cumsum(cost[0, 1:])
    acc[1:, 0] = cost[0, 0] + np.cumsum(cost[1:, 0])
    for i in range(1, n):
        prev, row, c = acc[i - 1], acc[i], cost[i]
        for j in range(1, m):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if row[j - 1] < best:
                best = row[j - 1]
            row[j] = c[j] + best
    return float(acc[n - 1, m - 1])


def persistence_forecast(inputs, target_index: int = 0, H: int = 36) -> np.ndarray:
    """Repeat the target channel's last observed value over the horizon."""
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[-1] < 1:
        raise ValueError("persistence needs at least one history step")
    return np.full(H, arr[target_index, -1])


@dataclass
class TargetMetrics:
    mse: float
    dtw: float
    n_windows: int

    @property
    def mse_table(self) -> float:
        return self.mse / MSE_TABLE_UNIT

    @property
    def dtw_table(self) -> float:
        return self.dtw / DTW_TABLE_UNIT


@dataclass
class MetricsReport:
    model: str
    covariates: bool | None
    per_target: dict[str, TargetMetrics] = field(default_factory=dict)
    baseline: "MetricsReport | None" = None

    def rows(self) -> list[dict]:
        out = []
        for target, m in self.per_target.items():
            if self.covariates is None:
                cov = "-"
            else:
                cov = "with" if self.covariates else "without"
            out.append(
                dict(
                    model=self.model, covariates=cov, target=target,
                    mse=m.mse, mse_table=m.mse_table, dtw=m.dtw, dtw_table=m.dtw_table,
                    n_windows=m.n_windows,
                )
            )
        return out


def score_forecasts(preds, actuals) -> TargetMetrics:
    """Mean MSE and mean DTW over paired forecast/actual horizons."""
    preds, actuals = list(preds), list(actuals)
    if len(preds) != len(actuals):
        raise ValueError(f"{len(preds)} forecasts for {len(actuals)} targets")
    if not preds:
        raise ValueError("no windows to score")
    mses = [mse_horizon(p, a) for p, a in zip(preds, actuals)]
    dtws = [dtw_distance(p, a) for p, a in zip(preds, actuals)]
    return TargetMetrics(float(np.mean(mses)), float(np.mean(dtws)), len(preds))
