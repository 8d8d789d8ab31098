"""Synthetic trip-request and weather data with known ground-truth intensity.

The expected number of pick-ups in a cell during a slot is

    lambda = base_rate * spatial(cell) * daily(hour) * weekly(day) * weather(condition)

with

    spatial(cell)  = 1 + sum_h A_h * exp(-d_h^2 / (2 s_h^2))
                     d_h = Euclidean distance in cell units from hotspot h's
                     centre cell, A_h its amplitude, s_h its decay
    daily(hour)    = night + (1 - night) * (1 - cos(2 pi (hour - 4) / 24)) / 2
                     + morning * exp(-c(hour, 8.5)^2 / 2)
                     + evening * exp(-c(hour, 18.5)^2 / (2 * 1.5^2))
                     c = circular distance in hours, hour = local time of slot start
    weekly(day)    = weekend_factor on Saturday/Sunday, else 1
    weather(code)  = rain_multiplier for Light Rain / Light Rain Showers, else 1

Weather is hourly and is read by each slot from the latest record at or
before its start, the same rule the feature builder uses.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ridecnn.grid import GridSpec, TimeSpec, locate_cells
from ridecnn.ingest import TripRecord, WeatherRecord, write_weather

RAIN_CODES = (4, 5)

# 2016-11-01 00:00 at UTC+8
CHENGDU_START = 1477929600
CHENGDU_GRID = GridSpec(104.04214, 104.12958, 30.65294, 30.72775)

# hourly condition transitions: stay with STAY_PROB, else jump by these weights
_CONDITION_WEIGHTS = {1: 3.0, 2: 0.5, 3: 2.0, 4: 1.2, 5: 0.8, 6: 1.5, 7: 3.0, 8: 3.0, 9: 0.5, 10: 2.0}
_STAY_PROB = 0.85


@dataclass(frozen=True)
class Hotspot:
    row: int
    col: int
    amplitude: float
    decay: float


@dataclass(frozen=True)
class SynthConfig:
    grid: GridSpec = CHENGDU_GRID
    start_epoch: int = CHENGDU_START
    days: int = 30
    slot_seconds: int = 600
    utc_offset_hours: float = 8.0
    base_rate: float = 1.5
    hotspots: tuple[Hotspot, ...] = (Hotspot(5, 6, 6.0, 1.5), Hotspot(3, 3, 3.0, 1.2), Hotspot(8, 7, 2.5, 1.0))
    night_level: float = 0.15
    morning_peak: float = 0.8
    evening_peak: float = 1.0
    weekend_factor: float = 0.85
    rain_multiplier: float = 1.3
    seed: int = 0

    def __post_init__(self):
        if self.base_rate < 0:
            raise ValueError("base_rate must be non-negative")
        for name in ("weekend_factor", "rain_multiplier", "night_level"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.morning_peak < 0 or self.evening_peak < 0:
            raise ValueError("peak amplitudes must be non-negative")
        if self.days < 1 or (86400 % self.slot_seconds):
            raise ValueError("need at least one day and a slot length dividing 24 h")

    @property
    def slots_per_day(self) -> int:
        return 86400 // self.slot_seconds

    @property
    def time(self) -> TimeSpec:
        return TimeSpec(self.start_epoch, self.days * self.slots_per_day, self.slot_seconds)


def spatial_factor(row, col, config: SynthConfig):
    total = 1.0
    for h in config.hotspots:
        d2 = (np.asarray(row) - h.row) ** 2 + (np.asarray(col) - h.col) ** 2
        total = total + h.amplitude * np.exp(-d2 / (2.0 * h.decay ** 2))
    return total


def _circular(hour, centre):
    d = np.abs(np.asarray(hour) - centre) % 24.0
    return np.minimum(d, 24.0 - d)


def daily_factor(hour, config: SynthConfig):
    hour = np.asarray(hour, dtype=float)
    base = config.night_level + (1.0 - config.night_level) * (1.0 - np.cos(2 * np.pi * (hour - 4.0) / 24.0)) / 2.0
    morning = config.morning_peak * np.exp(-_circular(hour, 8.5) ** 2 / 2.0)
    evening = config.evening_peak * np.exp(-_circular(hour, 18.5) ** 2 / (2.0 * 1.5 ** 2))
    return base + morning + evening


def weekly_factor(weekday, config: SynthConfig):
    return np.where(np.asarray(weekday) >= 5, config.weekend_factor, 1.0)


def weather_factor(condition, config: SynthConfig):
    return np.where(np.isin(condition, RAIN_CODES), config.rain_multiplier, 1.0)


def _slot_clock(slots, config: SynthConfig):
    local = config.start_epoch + np.asarray(slots, dtype=np.int64) * config.slot_seconds \
        + int(round(config.utc_offset_hours * 3600))
    hour = (local % 86400) / 3600.0
    weekday = (local // 86400 + 3) % 7
    return hour, weekday


def intensity(row: int, col: int, slot: int, config: SynthConfig, condition: int = 1) -> float:
    """Expected pick-ups for 1-based cell (row, col) in ``slot`` under weather ``condition``."""
    hour, weekday = _slot_clock(slot, config)
    return float(config.base_rate * spatial_factor(row, col, config) * daily_factor(hour, config)
                 * weekly_factor(weekday, config) * weather_factor(condition, config))


def intensity_grid(config: SynthConfig, slot_conditions: np.ndarray) -> np.ndarray:
    """Intensity for every (slot, row, col); ``slot_conditions`` gives each slot's weather code."""
    g = config.grid
    rows, cols = np.meshgrid(np.arange(1, g.rows + 1), np.arange(1, g.cols + 1), indexing="ij")
    spatial = spatial_factor(rows, cols, config)
    slots = np.arange(config.time.num_slots)
    hour, weekday = _slot_clock(slots, config)
    temporal = daily_factor(hour, config) * weekly_factor(weekday, config) * weather_factor(slot_conditions, config)
    return config.base_rate * temporal[:, None, None] * spatial[None]


def generate_weather(config: SynthConfig, rng: np.random.Generator) -> list[WeatherRecord]:
    hours = config.days * 24
    ts = config.start_epoch + 3600 * np.arange(hours)
    local_hour = ((ts + int(round(config.utc_offset_hours * 3600))) % 86400) / 3600.0
    codes = np.array(list(_CONDITION_WEIGHTS))
    weights = np.array(list(_CONDITION_WEIGHTS.values()))
    weights = weights / weights.sum()
    state = np.empty(hours, dtype=int)
    state[0] = 1
    stay = rng.random(hours)
    jump = rng.choice(codes, size=hours, p=weights)
    for i in range(1, hours):
        state[i] = state[i - 1] if stay[i] < _STAY_PROB else jump[i]
    day_offset = np.repeat(rng.normal(0.0, 3.0, config.days), 24)
    diurnal = np.cos(2 * np.pi * (local_hour - 15.0) / 24.0)
    temp = 57.0 + 7.0 * diurnal + day_offset + rng.normal(0.0, 0.8, hours)
    humidity = 76.0 - 12.0 * diurnal + 12.0 * np.isin(state, RAIN_CODES) + rng.normal(0.0, 3.0, hours)
    humidity = np.clip(humidity, 20.0, 100.0)
    return [WeatherRecord(int(t), round(float(a), 1), round(float(h), 1), int(c))
            for t, a, h, c in zip(ts, temp, humidity, state)]


def slot_conditions(weather: list[WeatherRecord], time: TimeSpec) -> np.ndarray:
    ts = np.array([w.ts for w in weather])
    codes = np.array([w.condition for w in weather])
    starts = time.start_epoch + np.arange(time.num_slots) * time.slot_seconds
    return codes[np.searchsorted(ts, starts, side="right") - 1]


@dataclass
class Trips:
    """Column-oriented generated trips."""

    order_id: list[str] = field(default_factory=list)
    start_ts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    end_ts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pickup_lon: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pickup_lat: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dropoff_lon: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dropoff_lat: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.start_ts)

    def records(self) -> list[TripRecord]:
        return [TripRecord(*row) for row in zip(self.order_id, self.start_ts.tolist(), self.end_ts.tolist(),
                                                self.pickup_lon.tolist(), self.pickup_lat.tolist(),
                                                self.dropoff_lon.tolist(), self.dropoff_lat.tolist())]


def _in_cell(lo_edge, hi_edge, u):
    return np.round(lo_edge + u * (hi_edge - lo_edge), 6)


def _generate_day(day: int, lam: np.ndarray, config: SynthConfig, seed_seq: np.random.SeedSequence) -> Trips:
    rng = np.random.default_rng(seed_seq)
    g = config.grid
    counts = rng.poisson(lam)
    slot, row, col = np.nonzero(counts)
    reps = counts[slot, row, col]
    slot, row, col = np.repeat(slot, reps), np.repeat(row, reps), np.repeat(col, reps)
    n = len(slot)
    lon_e, lat_e = g.lon_edges(), g.lat_edges()
    lon = _in_cell(lon_e[col], lon_e[col + 1], rng.random(n))
    lat = _in_cell(lat_e[row], lat_e[row + 1], rng.random(n))
    # a coordinate rounded onto a cell edge belongs to the neighbour; redraw those
    while True:
        r, c = locate_cells(lon, lat, g)
        bad = np.nonzero((r != row + 1) | (c != col + 1))[0]
        if not len(bad):
            break
        lon[bad] = _in_cell(lon_e[col[bad]], lon_e[col[bad] + 1], rng.random(len(bad)))
        lat[bad] = _in_cell(lat_e[row[bad]], lat_e[row[bad] + 1], rng.random(len(bad)))
    day_start = config.start_epoch + day * 86400
    start = day_start + slot.astype(np.int64) * config.slot_seconds + rng.integers(0, config.slot_seconds, n)
    end = start + rng.integers(300, 2700, n)
    drop_lon = np.round(rng.uniform(g.lon_min, g.lon_max, n), 6)
    drop_lat = np.round(rng.uniform(g.lat_min, g.lat_max, n), 6)
    order = np.argsort(start, kind="stable")
    ids = [f"s{config.seed}d{day:03d}n{i:06d}" for i in range(n)]
    return Trips(ids, start[order], end[order], lon[order], lat[order], drop_lon[order], drop_lat[order])


@dataclass
class SynthData:
    config: SynthConfig
    trips: Trips
    weather: list[WeatherRecord]
    lam: np.ndarray  # (num_slots, rows, cols) ground-truth intensity

    def trips_csv(self) -> str:
        t = self.trips
        lines = ["order_id,start_ts,end_ts,pickup_lon,pickup_lat,dropoff_lon,dropoff_lat"]
        lines += [f"{i},{s},{e},{a:.6f},{b:.6f},{c:.6f},{d:.6f}" for i, s, e, a, b, c, d in
                  zip(t.order_id, t.start_ts.tolist(), t.end_ts.tolist(), t.pickup_lon.tolist(),
                      t.pickup_lat.tolist(), t.dropoff_lon.tolist(), t.dropoff_lat.tolist())]
        return "\n".join(lines) + "\n"

    def weather_csv(self) -> str:
        buf = io.StringIO()
        write_weather(self.weather, buf)
        return buf.getvalue()

    def lambda_csv(self) -> str:
        T, R, C = self.lam.shape
        slot, row, col = np.meshgrid(np.arange(T), np.arange(1, R + 1), np.arange(1, C + 1), indexing="ij")
        lines = ["slot,row,col,lambda"]
        lines += [f"{s},{r},{c},{v:.6f}" for s, r, c, v in
                  zip(slot.ravel().tolist(), row.ravel().tolist(), col.ravel().tolist(), self.lam.ravel().tolist())]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"trips": out / "trips.csv", "weather": out / "weather.csv", "lambda": out / "lambda.csv"}
        paths["trips"].write_text(self.trips_csv())
        paths["weather"].write_text(self.weather_csv())
        paths["lambda"].write_text(self.lambda_csv())
        return paths


def generate(config: SynthConfig, workers: int = 1) -> SynthData:
    """Draw Poisson pick-up counts per (cell, slot) and scatter them uniformly in cell and slot.

    Weather uses the first child of the seed sequence and day d uses child
    d + 1, so the output does not depend on ``workers``.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.days + 1)
    weather = generate_weather(config, np.random.default_rng(children[0]))
    lam = intensity_grid(config, slot_conditions(weather, config.time))
    per_day = config.slots_per_day

    def day_job(d):
        return _generate_day(d, lam[d * per_day:(d + 1) * per_day], config, children[d + 1])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            days = list(pool.map(day_job, range(config.days)))
    else:
        days = [day_job(d) for d in range(config.days)]
    trips = Trips(
        [i for d in days for i in d.order_id],
        *(np.concatenate([getattr(d, f) for d in days]) for f in
          ("start_ts", "end_ts", "pickup_lon", "pickup_lat", "dropoff_lon", "dropoff_lat")),
    )
    return SynthData(config, trips, weather, lam)


def expected_total(lam: np.ndarray) -> tuple[float, float]:
    """Mean and standard deviation of the total trip count under the Poisson model."""
    total = float(lam.sum())
    return total, math.sqrt(total)


__all__ = [
    "CHENGDU_GRID",
    "CHENGDU_START",
    "Hotspot",
    "SynthConfig",
    "SynthData",
    "daily_factor",
    "expected_total",
    "generate",
    "intensity",
    "intensity_grid",
    "spatial_factor",
    "weather_factor",
    "weekly_factor",
]
