"""Scoring trained models, exporting attention maps, and the benchmark grid."""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..attention import AttentionForecaster
from ..data import CANONICAL_SPECS, PatientSeries, SplitDataset, Window, prepare_windows, split_patients
from ..metrics import REPORT_HEADER, MetricsReport, persistence_forecast, score_forecasts
from ..numerics import Tensor
from ..rng import derive_seed
from .config import DEFAULT_COVARIATES, TrainConfig
from .heatmap import render_heatmap_svg
from .training import TrainedModel, predict, train_model

log = logging.getLogger(__name__)


def persistence_report(windows: Sequence[Window], H: int) -> MetricsReport:
    if not windows:
        raise ValueError("no windows to score")
    preds = [persistence_forecast(w.input, 0, H) for w in windows]
    target = windows[0].target_name
    return MetricsReport("persistence", None, {target: score_forecasts(preds, [w.target for w in windows])})


def evaluate_model(trained: TrainedModel, test: Sequence[Window]) -> MetricsReport:
    """Mean MSE / DTW of the model over ``test``, with the persistence baseline attached."""
    cfg = trained.config
    preds = predict(trained, test)
    report = MetricsReport(
        cfg.model_name,
        bool(cfg.covariates),
        {cfg.target: score_forecasts(list(preds), [w.target for w in test])},
    )
    report.baseline = persistence_report(test, cfg.H)
    return report


def report_rows(reports: Iterable[MetricsReport]) -> list[dict]:
    rows = []
    for r in reports:
        rows.extend(r.rows())
    return rows


def format_report_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in REPORT_HEADER])
    return buf.getvalue()


def write_report_csv(rows: Sequence[dict], path: str | Path) -> None:
    Path(path).write_text(format_report_csv(rows), encoding="utf-8")


def model_windows(cfg: TrainConfig, raw: Sequence[PatientSeries]) -> SplitDataset:
    """Windows for ``cfg`` split by patient with the config's seed."""
    return split_patients(prepare_windows(raw, cfg.target, cfg.covariates, cfg.L, cfg.H), seed=cfg.seed)


# ---------------------------------------------------------------------------
# Explanations
# ---------------------------------------------------------------------------


def explain_window(trained: TrainedModel, window: Window, out_dir: str | Path) -> dict[str, Path]:
    """Write forecast, attention map, heatmap and horizon-mean attention for one window."""
    model = trained.model
    if not isinstance(model, AttentionForecaster):
        raise ValueError("explain_window needs a model trained with attention enabled")
    cfg = trained.config
    predict(trained, [window])  # shape / channel validation
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    forecast, art = model.forward(Tensor(window.input))
    names = window.channel_names
    spec = CANONICAL_SPECS[cfg.target]
    persist = persistence_forecast(window.input, 0, cfg.H)

    paths = {
        "forecast": out / "forecast.csv",
        "attention": out / "attention.csv",
        "attention_svg": out / "attention.svg",
        "attention_mean": out / "attention_mean.csv",
    }

    with open(paths["forecast"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "forecast", "actual", "persistence", "forecast_raw", "actual_raw"])
        raw_fc, raw_act = spec.unscale(forecast.data), spec.unscale(window.target)
        for h in range(cfg.H):
            w.writerow([h, repr(float(forecast.data[h])), repr(float(window.target[h])), repr(float(persist[h])),
                        repr(float(raw_fc[h])), repr(float(raw_act[h]))])

    with open(paths["attention"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "step", *(f"t{t}" for t in range(cfg.L))])
        for i, name in enumerate(names):
            for h in range(cfg.H):
                w.writerow([name, h, *(repr(float(v)) for v in art.A[i, h])])

    with open(paths["attention_mean"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "t", "mean_attention"])
        profile = art.A.mean(axis=1)
        for i, name in enumerate(names):
            for t in range(cfg.L):
                w.writerow([name, t, repr(float(profile[i, t]))])

    title = f"{cfg.model_name} attention, {window.patient_id} (rows: forecast step, columns: history step)"
    svg = render_heatmap_svg({name: art.A[i] for i, name in enumerate(names)}, title)
    paths["attention_svg"].write_text(svg, encoding="utf-8")
    return paths


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


def benchmark_grid(target: str, seed: int, base: TrainConfig | None = None) -> list[TrainConfig]:
    """Model x attention x covariate grid; each cell gets its own derived seed."""
    base = base or TrainConfig(target=target)
    grid = []
    for kind in ("nhits", "nbeats"):
        for attention in (False, True):
            for covs in (DEFAULT_COVARIATES[target], ()):
                grid.append(base.replace(model_kind=kind, attention=attention, target=target, covariates=covs))
    return [cfg.replace(seed=derive_seed(seed, i)) for i, cfg in enumerate(grid)]


def run_benchmark(
    grid: Sequence[TrainConfig],
    raw: Sequence[PatientSeries],
    split_seed: int,
) -> list[dict]:
    """Train and score every grid cell on a shared patient split.

    Returns report rows: one per configuration, then one persistence row
    per target.
    """
    if not grid:
        raise ValueError("benchmark grid is empty")
    cache: dict[tuple, SplitDataset] = {}
    rows, baselines = [], {}
    for i, cfg in enumerate(grid):
        key = (cfg.target, cfg.covariates, cfg.L, cfg.H)
        if key not in cache:
            windows = prepare_windows(raw, cfg.target, cfg.covariates, cfg.L, cfg.H)
            cache[key] = split_patients(windows, seed=split_seed)
        data = cache[key]
        log.info("benchmark %d/%d: %s covariates=%s target=%s", i + 1, len(grid), cfg.model_name,
                 ",".join(cfg.covariates) or "-", cfg.target)
        trained = train_model(cfg, data)
        report = evaluate_model(trained, data.test)
        rows.extend(report.rows())
        base_row = report.baseline.rows()[0]
        previous = baselines.setdefault(cfg.target, base_row)
        if previous != base_row:
            log.warning("persistence differs between covariate settings for %s", cfg.target)
    for target in dict.fromkeys(cfg.target for cfg in grid):
        rows.append(baselines[target])
    return rows
