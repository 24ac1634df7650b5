"""Vital-sign series: CSV I/O, imputation, clinical scaling, windowing, splits.

Also hosts a deterministic synthetic ICU-like generator for when no real
recordings are at hand.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import SplitMix64

CHANNELS = ("HR", "MBP", "RR")
HEADER = ("patient_id", "timestamp_min", *CHANNELS)
STEP_MIN = 5


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigurationError(ValueError):
    pass


class AlreadyScaledError(RuntimeError):
    pass


@dataclass(frozen=True)
class SeriesSpec:
    name: str
    clip_lo: float
    clip_hi: float

    def __post_init__(self):
        if not self.clip_lo < self.clip_hi:
            raise ConfigurationError(f"{self.name}: clip_lo must be below clip_hi")

    def scale(self, values: np.ndarray) -> np.ndarray:
        return (np.clip(values, self.clip_lo, self.clip_hi) - self.clip_lo) / (self.clip_hi - self.clip_lo)

    def unscale(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values) * (self.clip_hi - self.clip_lo) + self.clip_lo


CANONICAL_SPECS: dict[str, SeriesSpec] = {
    "HR": SeriesSpec("HR", 0.0, 300.0),
    "MBP": SeriesSpec("MBP", 0.0, 190.0),
    "RR": SeriesSpec("RR", 0.0, 100.0),
}


@dataclass
class PatientSeries:
    """One patient's readings on a 5-minute grid; NaN marks a missing cell."""

    patient_id: str
    timestamps: np.ndarray
    channels: dict[str, np.ndarray]
    scaled: bool = False

    def __post_init__(self):
        n = len(self.timestamps)
        for name, arr in self.channels.items():
            if len(arr) != n:
                raise ValueError(f"{self.patient_id}: channel {name} has {len(arr)} values, grid has {n}")

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass
class Window:
    patient_id: str
    input: np.ndarray  # (N, L); row 0 is the target channel
    target: np.ndarray  # (H,)
    target_name: str
    covariate_names: tuple[str, ...] = ()
    start: int = 0

    @property
    def channel_names(self) -> tuple[str, ...]:
        return (self.target_name, *self.covariate_names)


@dataclass
class SplitDataset:
    train: list[Window] = field(default_factory=list)
    validation: list[Window] = field(default_factory=list)
    test: list[Window] = field(default_factory=list)

    def patients(self, split: str) -> set[str]:
        return {w.patient_id for w in getattr(self, split)}


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _parse_float(cell: str, line: int, column: str) -> float:
    cell = cell.strip()
    if cell == "":
        return math.nan
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric {column} value {cell!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {column} value {cell!r}", line)
    return value


def load_series_csv(path: str | Path) -> list[PatientSeries]:
    """Read the ``patient_id,timestamp_min,HR,MBP,RR`` format.

    Rows are grouped by patient (in order of first appearance) and sorted by
    timestamp; a repeated timestamp keeps the last row.
    """
    rows: dict[str, dict[float, tuple[float, ...]]] = {}
    first_line: dict[str, dict[float, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("missing header", 1)
        if tuple(h.strip() for h in header) != HEADER:
            raise ParseError(f"expected header {','.join(HEADER)}, got {','.join(header)}", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(HEADER):
                raise ParseError(f"expected {len(HEADER)} fields, got {len(row)}", line)
            pid = row[0].strip()
            if not pid:
                raise ParseError("empty patient_id", line)
            ts = _parse_float(row[1], line, "timestamp_min")
            if math.isnan(ts):
                raise ParseError("missing timestamp_min", line)
            values = tuple(_parse_float(c, line, name) for c, name in zip(row[2:], CHANNELS))
            rows.setdefault(pid, {})[ts] = values
            first_line.setdefault(pid, {})[ts] = line

    out = []
    for pid, by_ts in rows.items():
        stamps = sorted(by_ts)
        steps = np.diff(stamps)
        bad = np.flatnonzero(steps != STEP_MIN)
        if bad.size:
            ts = stamps[bad[0] + 1]
            raise ParseError(
                f"patient {pid}: timestamp {ts:g} breaks the {STEP_MIN}-minute grid",
                first_line[pid][ts],
            )
        table = np.array([by_ts[t] for t in stamps], dtype=np.float64).reshape(len(stamps), len(CHANNELS))
        out.append(
            PatientSeries(
                pid,
                np.array(stamps, dtype=np.float64),
                {name: table[:, j].copy() for j, name in enumerate(CHANNELS)},
            )
        )
    return out


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_series_csv(series: Iterable[PatientSeries], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for s in series:
            for i, t in enumerate(s.timestamps):
                stamp = str(int(t)) if float(t).is_integer() else repr(float(t))
                writer.writerow(
                    [s.patient_id, stamp, *(_fmt(s.channels[c][i]) if c in s.channels else "" for c in CHANNELS)]
                )


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def _fill(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    observed = ~np.isnan(out)
    if not observed.any():
        return out
    idx = np.where(observed, np.arange(len(out)), -1)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmax(observed))
    idx[idx < 0] = first
    return out[idx]


def impute_fill(series: PatientSeries) -> PatientSeries:
    """Forward-fill then backward-fill each channel.

    A channel with no observations at all stays missing.
    """
    return replace(series, channels={k: _fill(v) for k, v in series.channels.items()})


def clip_and_scale(series: PatientSeries, specs: dict[str, SeriesSpec] = CANONICAL_SPECS) -> PatientSeries:
    """Clamp each channel to its clinical bounds and map the range onto [0, 1]."""
    if series.scaled:
        raise AlreadyScaledError(f"{series.patient_id}: series is already scaled")
    channels = {}
    for name, values in series.channels.items():
        if name not in specs:
            raise ConfigurationError(f"no scaling bounds configured for channel {name}")
        channels[name] = specs[name].scale(values)
    return replace(series, channels=channels, scaled=True)


def make_windows(
    series: PatientSeries,
    L: int = 72,
    H: int = 36,
    target: str = "MBP",
    covariates: Sequence[str] = (),
) -> list[Window]:
    """Cut non-overlapping ``L + H`` segments from the start of the series.

    Segments with any missing value in the used channels are dropped.
    """
    if not series.scaled:
        raise ValueError(f"{series.patient_id}: make_windows expects a scaled series")
    names = (target, *covariates)
    if len(set(names)) != len(names):
        raise ConfigurationError(f"target {target} repeated among covariates {tuple(covariates)}")
    for name in names:
        if name not in series.channels:
            raise ConfigurationError(f"{series.patient_id}: no channel {name}")
    stacked = np.stack([series.channels[n] for n in names])
    span = L + H
    windows = []
    for start in range(0, len(series) - span + 1, span):
        seg = stacked[:, start : start + span]
        if np.isnan(seg).any():
            continue
        windows.append(
            Window(
                series.patient_id,
                seg[:, :L].copy(),
                seg[0, L:].copy(),
                target,
                tuple(covariates),
                start,
            )
        )
    return windows


def prepare_windows(
    raw: Iterable[PatientSeries],
    target: str,
    covariates: Sequence[str] = (),
    L: int = 72,
    H: int = 36,
    specs: dict[str, SeriesSpec] = CANONICAL_SPECS,
) -> list[Window]:
    """Impute, scale and window every patient."""
    out: list[Window] = []
    for s in raw:
        out.extend(make_windows(clip_and_scale(impute_fill(s), specs), L, H, target, covariates))
    return out


def split_patients(
    windows: Sequence[Window],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitDataset:
    """Shuffle patients with a seeded PRNG and partition them by cumulative ratio."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    patients = sorted({w.patient_id for w in windows})
    if len(patients) < 3:
        warnings.warn(
            f"only {len(patients)} patient(s); degenerate split puts everything in train",
            stacklevel=2,
        )
        return SplitDataset(train=list(windows))
    SplitMix64(seed).shuffle(patients)
    n = len(patients)
    c1 = round(n * ratios[0])
    c2 = round(n * (ratios[0] + ratios[1]))
    assignment = {}
    for i, pid in enumerate(patients):
        assignment[pid] = 0 if i < c1 else (1 if i < c2 else 2)
    parts: tuple[list, list, list] = ([], [], [])
    for w in windows:
        parts[assignment[w.patient_id]].append(w)
    return SplitDataset(*parts)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    period_min: float = 240.0
    rho: float = 0.9
    hr_sigma: float = 2.0
    mbp_sigma: float = 2.0
    rr_sigma: float = 1.0
    event_fraction: float = 0.3
    hr_drift: float = 15.0
    mbp_drift: float = -12.0
    drift_min: float = 180.0
    missing_rate: float = 0.02


def _ar1(rng: SplitMix64, n: int, rho: float, sigma: float) -> np.ndarray:
    # stationary: marginal std is sigma
    out = np.empty(n)
    innov = sigma * math.sqrt(1.0 - rho * rho)
    e = sigma * rng.gauss()
    for i in range(n):
        if i:
            e = rho * e + innov * rng.gauss()
        out[i] = e
    return out


def generate_synthetic(
    n_patients: int,
    minutes: int = 540,
    seed: int = 0,
    config: SyntheticConfig = SyntheticConfig(),
    events: bool = True,
) -> list[PatientSeries]:
    """Deterministic ICU-like HR/MBP/RR series in raw units.

    HR oscillates around 80 bpm with stationary AR(1) noise, MBP falls as HR
    rises, RR rises with HR. A fraction of patients gets a deterioration
    ramp (HR up, MBP down) that completes over ``drift_min`` minutes and then
    holds. Cells are then masked missing at ``missing_rate``.
    """
    if n_patients < 1:
        raise ValueError("n_patients must be at least 1")
    n = int(minutes) // STEP_MIN
    if n < 1:
        raise ValueError(f"minutes must cover at least one {STEP_MIN}-minute step")
    rng = SplitMix64(seed)
    t = np.arange(n, dtype=np.float64) * STEP_MIN
    out = []
    for p in range(n_patients):
        phase = rng.uniform_range(0.0, 2.0 * math.pi)
        has_event = events and rng.uniform() < config.event_fraction
        onset = rng.uniform_range(0.0, float(minutes))
        hr_noise = _ar1(rng, n, config.rho, config.hr_sigma)
        mbp_noise = _ar1(rng, n, config.rho, config.mbp_sigma)
        rr_noise = _ar1(rng, n, config.rho, config.rr_sigma)

        ramp = np.clip((t - onset) / config.drift_min, 0.0, 1.0) if has_event else np.zeros(n)
        hr = 80.0 + 10.0 * np.sin(2.0 * math.pi * t / config.period_min + phase) + hr_noise
        hr = hr + config.hr_drift * ramp
        mbp = 85.0 - 0.25 * (hr - 80.0) + mbp_noise + config.mbp_drift * ramp
        rr = 16.0 + 0.05 * (hr - 80.0) + rr_noise

        channels = {"HR": hr, "MBP": mbp, "RR": rr}
        for name in CHANNELS:
            mask = np.array([rng.uniform() < config.missing_rate for _ in range(n)])
            channels[name] = np.where(mask, np.nan, channels[name])
        out.append(PatientSeries(f"P{p:05d}", t.copy(), channels))
    return out
