"""
From raw trips to demand frames
===============================

Generate a day of synthetic pick-ups, bin them onto the 10x10 grid and
look at one input frame.
"""

import io

import numpy as np

from ridecnn.features import build_contexts, compose_frame, fit_scaler
from ridecnn.grid import build_demand_series, locate_cell, zone_number
from ridecnn.ingest import parse_trips, parse_weather
from ridecnn.synth import SynthConfig, generate

# one day under the default intensity model
cfg = SynthConfig(days=1, seed=1)
data = generate(cfg)
print(f"{len(data.trips)} trips, expected {data.lam.sum():.0f}")

# round-trip through the CSV formats the pipeline reads
trips, errors = parse_trips(io.StringIO(data.trips_csv()))
weather, _ = parse_weather(io.StringIO(data.weather_csv()))
print(f"parsed {len(trips)} trips with {len(errors)} malformed rows")

# cell lookup: row 1 is the northern edge, zones run row by row
first = trips[0]
row, col = locate_cell(first.pickup_lon, first.pickup_lat, cfg.grid)
print(f"first trip lands in cell ({row}, {col}), zone {zone_number(row, col)}")

series, drops = build_demand_series(trips, cfg.grid, cfg.time)
print(f"{drops.total} trips dropped")

# the busiest zone sits on the strongest hotspot
busiest = np.unravel_index(series.counts.sum(axis=0).argmax(), (10, 10))
print("busiest zone:", zone_number(busiest[0] + 1, busiest[1] + 1))

# demand by hour shows the morning and evening peaks
hourly = series.counts.sum(axis=(1, 2)).reshape(24, 6).sum(axis=1)
for hour, count in enumerate(hourly):
    print(f"{hour:02d}:00 {'#' * int(count // 40)}")

# an 11x10 frame: scaled demand above, context in the bottom row
contexts = build_contexts(cfg.time, cfg.utc_offset_hours, weather)
scaler = fit_scaler(series.counts, contexts)
frame = compose_frame(series.counts[51], contexts[51], scaler)
np.set_printoptions(precision=2, suppress=True, linewidth=100)
print(frame)
