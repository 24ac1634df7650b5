"""Command-line entry point: ``vitalattn <command> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from typing import Sequence

from . import gradsuite
from .data import CANONICAL_SPECS, generate_synthetic, load_series_csv, write_series_csv
from .metrics import persistence_forecast
from .pipeline.config import ConfigError, TrainConfig, parse_bool, read_config_file
from .pipeline.evaluation import (
    benchmark_grid,
    evaluate_model,
    explain_window,
    model_windows,
    report_rows,
    run_benchmark,
    write_report_csv,
)
from .pipeline.serialization import load_model, save_model
from .pipeline.training import predict, train_model

log = logging.getLogger("vitalattn")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits unsigned: {text}")
    return value


def _on_off(text: str) -> bool:
    try:
        return parse_bool(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_synth(args) -> int:
    series = generate_synthetic(args.patients, int(round(args.hours * 60)), seed=args.seed)
    write_series_csv(series, args.out)
    log.info("wrote %d patients to %s", len(series), args.out)
    return 0


def cmd_train(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    values.update(model_kind=args.model, attention=args.attention, target=args.target, seed=args.seed)
    if args.covariates is not None:
        values["covariates"] = tuple(c for c in args.covariates.split(",") if c)
    cfg = TrainConfig.from_dict(values)
    data = model_windows(cfg, load_series_csv(args.data))
    trained = train_model(cfg, data)
    save_model(trained, args.out)
    log.info("best epoch %d, validation MSE %.6g; saved %s", trained.best_epoch, trained.best_val_loss, args.out)
    return 0


def _test_windows(trained, data_path):
    return model_windows(trained.config, load_series_csv(data_path)).test


def _pick(windows, index: int):
    if not 0 <= index < len(windows):
        raise ValueError(f"window index {index} out of range; test split has {len(windows)} windows")
    return windows[index]


def cmd_evaluate(args) -> int:
    trained = load_model(args.model)
    report = evaluate_model(trained, _test_windows(trained, args.data))
    write_report_csv(report_rows([report, report.baseline]), args.report)
    return 0


def cmd_explain(args) -> int:
    trained = load_model(args.model)
    window = _pick(_test_windows(trained, args.data), args.window)
    for path in explain_window(trained, window, args.out_dir).values():
        log.info("wrote %s", path)
    return 0


def cmd_forecast(args) -> int:
    trained = load_model(args.model)
    window = _pick(_test_windows(trained, args.data), args.window)
    pred = predict(trained, [window])[0]
    spec = CANONICAL_SPECS[trained.config.target]
    persist = persistence_forecast(window.input, 0, trained.config.H)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "forecast", "forecast_raw", "persistence"])
        for h, (v, raw) in enumerate(zip(pred, spec.unscale(pred))):
            w.writerow([h, repr(float(v)), repr(float(raw)), repr(float(persist[h]))])
    return 0


def cmd_benchmark(args) -> int:
    raw = load_series_csv(args.data)
    rows = run_benchmark(benchmark_grid(args.target, args.seed), raw, args.seed)
    write_report_csv(rows, args.report)
    return 0


def cmd_gradcheck(args) -> int:
    return 0 if gradsuite.main(args.seed) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitalattn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic ICU-like CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--patients", type=int, required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--hours", type=float, default=9.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one forecaster")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=("nbeats", "nhits"), required=True)
    p.add_argument("--attention", type=_on_off, required=True, metavar="{on|off}")
    p.add_argument("--target", choices=("HR", "MBP", "RR"), required=True)
    p.add_argument("--covariates", default=None, help="comma-separated, e.g. HR,RR")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model on its test split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="export attention maps for one test window")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("forecast", help="forecast one test window")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("benchmark", help="train and score the full model grid")
    p.add_argument("--data", required=True)
    p.add_argument("--target", choices=("HR", "MBP"), required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
