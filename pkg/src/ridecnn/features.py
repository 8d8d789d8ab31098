"""Context vectors, min-max scaling, 11x10 frames and sliding-window samples."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import IO, NamedTuple, Sequence

import numpy as np

from ridecnn.grid import DemandSeries, TimeSpec
from ridecnn.ingest import WeatherRecord

CONTEXT_FEATURES = ("min_t", "day_t", "t", "temp_t", "humi_t", "wc_t")
SCALER_FEATURES = CONTEXT_FEATURES + ("demand",)


class WeatherGapError(ValueError):
    pass


class ContextVector(NamedTuple):
    min_t: int
    day_t: int
    t: int
    temp_t: float
    humi_t: float
    wc_t: int


def _local_clock(ts: int, utc_offset_hours: float) -> tuple[int, int]:
    local = datetime.fromtimestamp(ts, tz=timezone(timedelta(hours=utc_offset_hours)))
    return local.hour * 60 + local.minute, local.weekday()


def build_context(slot: int, time: TimeSpec, utc_offset_hours: float,
                  weather: Sequence[WeatherRecord]) -> ContextVector:
    """Context of one slot; weather comes from the latest record at or before the slot start."""
    start = time.slot_start(slot)
    i = bisect.bisect_right([w.ts for w in weather], start) - 1
    if i < 0:
        raise WeatherGapError(f"weather coverage gap: no record at or before slot {slot} (ts={start})")
    w = weather[i]
    minute, day = _local_clock(start, utc_offset_hours)
    return ContextVector(minute, day, slot, w.temp, w.humidity, w.condition)


def build_contexts(time: TimeSpec, utc_offset_hours: float, weather: Sequence[WeatherRecord]) -> np.ndarray:
    """Context matrix (num_slots, 6) for every slot of ``time``; same rules as ``build_context``."""
    starts = time.start_epoch + np.arange(time.num_slots, dtype=np.int64) * time.slot_seconds
    ts = np.array([w.ts for w in weather], dtype=np.int64)
    idx = np.searchsorted(ts, starts, side="right") - 1
    if len(idx) and idx[0] < 0:
        first = int(np.argmax(idx >= 0)) if (idx >= 0).any() else time.num_slots
        raise WeatherGapError(f"weather coverage gap: no record at or before slot 0 (ts={starts[0]}); "
                              f"first covered slot is {first}")
    local = starts + int(round(utc_offset_hours * 3600))
    minutes = (local % 86400) // 60
    # 1970-01-01 was a Thursday (weekday 3)
    days = (local // 86400 + 3) % 7
    temp = np.array([w.temp for w in weather], dtype=float)[idx]
    humi = np.array([w.humidity for w in weather], dtype=float)[idx]
    cond = np.array([w.condition for w in weather], dtype=float)[idx]
    return np.column_stack([minutes, days, np.arange(time.num_slots), temp, humi, cond]).astype(float)


@dataclass
class Scaler:
    """Per-feature min-max scaler; constant features transform to 0."""

    mins: np.ndarray  # (7,) in SCALER_FEATURES order
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=float)
        self.maxs = np.asarray(self.maxs, dtype=float)
        if self.mins.shape != (len(SCALER_FEATURES),) or self.maxs.shape != self.mins.shape:
            raise ValueError(f"scaler needs {len(SCALER_FEATURES)} mins and maxs")
        if (self.maxs < self.mins).any():
            raise ValueError("scaler max below min")

    def _apply(self, x, lo, hi):
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (np.asarray(x, dtype=float) - lo) / safe, 0.0)

    def transform_context(self, ctx) -> np.ndarray:
        return self._apply(ctx, self.mins[:6], self.maxs[:6])

    def transform_demand(self, counts) -> np.ndarray:
        return self._apply(counts, self.mins[6], self.maxs[6])

    def inverse_context(self, scaled) -> np.ndarray:
        return self.mins[:6] + np.asarray(scaled, dtype=float) * (self.maxs[:6] - self.mins[:6])

    def inverse_demand(self, scaled) -> np.ndarray:
        return self.mins[6] + np.asarray(scaled, dtype=float) * (self.maxs[6] - self.mins[6])

    def save(self, stream: IO[str]) -> None:
        stream.write("feature,min,max\n")
        for name, lo, hi in zip(SCALER_FEATURES, self.mins, self.maxs):
            stream.write(f"{name},{float(lo)!r},{float(hi)!r}\n")

    @classmethod
    def load(cls, stream: IO[str]) -> "Scaler":
        lines = [ln.strip() for ln in stream if ln.strip()]
        if not lines or lines[0] != "feature,min,max":
            raise ValueError("scaler manifest must start with 'feature,min,max'")
        table = {}
        for ln in lines[1:]:
            name, lo, hi = ln.split(",")
            table[name] = (float(lo), float(hi))
        missing = set(SCALER_FEATURES) - set(table)
        if missing:
            raise ValueError(f"scaler manifest lacks {sorted(missing)}")
        return cls(np.array([table[f][0] for f in SCALER_FEATURES]), np.array([table[f][1] for f in SCALER_FEATURES]))


def fit_scaler(train_counts, train_contexts) -> Scaler:
    """Fit on the training slots only: per-feature context range plus one global demand range."""
    counts = np.asarray(train_counts.counts if isinstance(train_counts, DemandSeries) else train_counts)
    ctx = np.asarray(train_contexts, dtype=float).reshape(-1, len(CONTEXT_FEATURES))
    if counts.size == 0 or ctx.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training portion")
    mins = np.append(ctx.min(axis=0), counts.min())
    maxs = np.append(ctx.max(axis=0), counts.max())
    return Scaler(mins, maxs)


def compose_frame(demand, ctx, scaler: Scaler) -> np.ndarray:
    """Stack scaled demand (rows x cols) over a context row: first six pixels C_t, the rest 0."""
    demand = np.asarray(demand)
    rows, cols = demand.shape
    if cols < len(CONTEXT_FEATURES):
        raise ValueError(f"frame needs at least {len(CONTEXT_FEATURES)} columns for the context row")
    frame = np.zeros((rows + 1, cols))
    frame[:rows] = scaler.transform_demand(demand)
    frame[rows, :len(CONTEXT_FEATURES)] = scaler.transform_context(ctx)
    return frame


def compose_frames(counts: np.ndarray, contexts: np.ndarray, scaler: Scaler) -> np.ndarray:
    """Vectorised ``compose_frame`` over a (T, rows, cols) series."""
    T, rows, cols = counts.shape
    frames = np.zeros((T, rows + 1, cols))
    frames[:, :rows] = scaler.transform_demand(counts)
    frames[:, rows, :len(CONTEXT_FEATURES)] = scaler.transform_context(contexts)
    return frames


class Sample(NamedTuple):
    input: np.ndarray   # (m, rows+1, cols)
    target: np.ndarray  # (k_max * zones,) raw counts, horizon-major
    anchor: int


@dataclass
class SampleSet:
    """Windowed supervised samples held as stacked arrays."""

    inputs: np.ndarray       # (N, m, rows+1, cols)
    targets: np.ndarray      # (N, k_max * zones)
    anchors: np.ndarray      # (N,) slot index of the first predicted slot
    last_demand: np.ndarray  # (N, rows, cols) raw D_{t-1}
    k_max: int

    def __len__(self) -> int:
        return len(self.anchors)

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, np.ndarray):
            return SampleSet(self.inputs[i], self.targets[i], self.anchors[i], self.last_demand[i], self.k_max)
        return Sample(self.inputs[i], self.targets[i], int(self.anchors[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.last_demand.shape[1:]

    def target_matrices(self) -> np.ndarray:
        """Targets reshaped to (N, k_max, rows, cols)."""
        return self.targets.reshape(len(self), self.k_max, *self.grid_shape)


def sample_count(num_slots: int, m: int, k_max: int) -> int:
    return num_slots - m - k_max + 1


def build_dataset(series: DemandSeries, contexts, scaler: Scaler, m: int = 6, k_max: int = 6) -> SampleSet:
    """One sample per anchor t in [m, T - k_max]: frames t-m..t-1 in, D_t..D_{t+k_max-1} out."""
    counts = series.counts
    T = counts.shape[0]
    if m < 1 or k_max < 1:
        raise ValueError("m and k_max must be at least 1")
    if T < m + k_max:
        raise ValueError(f"series too short: {T} slots < m + k_max = {m + k_max}")
    contexts = np.asarray(contexts, dtype=float)
    if contexts.shape != (T, len(CONTEXT_FEATURES)):
        raise ValueError(f"contexts shape {contexts.shape} does not match ({T}, {len(CONTEXT_FEATURES)})")
    frames = compose_frames(counts, contexts, scaler)
    anchors = np.arange(m, T - k_max + 1)
    window = np.lib.stride_tricks.sliding_window_view(frames, m, axis=0)  # (T-m+1, rows+1, cols, m)
    inputs = np.ascontiguousarray(np.moveaxis(window[anchors - m], -1, 1))
    flat = counts.reshape(T, -1).astype(float)
    targets = np.concatenate([flat[anchors + h] for h in range(k_max)], axis=1)
    return SampleSet(inputs, targets, anchors, counts[anchors - 1].copy(), k_max)


def _train_size(n: int, train_fraction: float) -> int:
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    return math.ceil(round(train_fraction * n, 9))


def split_chronological(dataset: SampleSet, train_fraction: float) -> tuple[SampleSet, SampleSet]:
    """Earliest ceil(fraction * N) samples train, the rest test; order kept."""
    n = len(dataset)
    n_train = _train_size(n, train_fraction)
    if n_train == 0 or n_train >= n:
        raise ValueError(f"split of {n} samples at {train_fraction} leaves one side empty")
    return dataset[:n_train], dataset[n_train:]


def train_slot_count(num_slots: int, m: int, k_max: int, train_fraction: float) -> int:
    """Number of leading slots whose frames feed training inputs, the scaler's fitting range."""
    n_train = _train_size(sample_count(num_slots, m, k_max), train_fraction)
    return m + n_train - 1


def prepare_datasets(series: DemandSeries, contexts, m: int, k_max: int,
                     train_fraction: float) -> tuple[Scaler, SampleSet, SampleSet]:
    """Fit the scaler on train-side slots, window the whole series, split chronologically."""
    if series.time.num_slots < m + k_max:
        raise ValueError(f"series too short: {series.time.num_slots} slots < m + k_max = {m + k_max}")
    limit = train_slot_count(series.time.num_slots, m, k_max, train_fraction)
    contexts = np.asarray(contexts, dtype=float)
    scaler = fit_scaler(series.counts[:limit], contexts[:limit])
    dataset = build_dataset(series, contexts, scaler, m, k_max)
    train, test = split_chronological(dataset, train_fraction)
    return scaler, train, test
