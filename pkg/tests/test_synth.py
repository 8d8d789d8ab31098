import io
import math

import numpy as np
import pytest

from oracles import poisson_total_bound
from ridecnn.grid import build_demand_series, locate_cell
from ridecnn.ingest import parse_trips, parse_weather
from ridecnn.synth import (CHENGDU_START, Hotspot, SynthConfig, expected_total, generate, intensity,
                           intensity_grid, slot_conditions, spatial_factor)


def test_zero_base_rate():
    cfg = SynthConfig(days=1, base_rate=0.0)
    assert np.all(intensity_grid(cfg, np.ones(cfg.time.num_slots, int)) == 0)
    assert len(generate(cfg).trips) == 0


def test_hotspot_centre_is_maximal():
    cfg = SynthConfig(hotspots=(Hotspot(4, 7, 5.0, 1.3),))
    grid = np.array([[spatial_factor(r, c, cfg) for c in range(1, 11)] for r in range(1, 11)])
    assert np.unravel_index(grid.argmax(), grid.shape) == (3, 6)
    assert grid.max() == pytest.approx(6.0)


def test_hand_evaluated_intensity():
    cfg = SynthConfig(base_rate=2.0, hotspots=(Hotspot(5, 5, 4.0, 2.0),), night_level=0.2, morning_peak=0.5,
                      evening_peak=1.0, weekend_factor=0.8, rain_multiplier=1.5)
    # slot 51 of 2016-11-01 (a Tuesday) starts at 08:30 local; cell (6, 5) is 1 cell from the hotspot
    spatial = 1 + 4.0 * math.exp(-1 / 8)
    daily = 0.2 + 0.8 * (1 - math.cos(2 * math.pi * 4.5 / 24)) / 2 + 0.5 + 1.0 * math.exp(-100 / 4.5)
    expected = 2.0 * spatial * daily * 1.0 * 1.5
    assert intensity(6, 5, 51, cfg, condition=4) == pytest.approx(expected, rel=1e-12)
    assert intensity(6, 5, 51, cfg, condition=1) == pytest.approx(expected / 1.5, rel=1e-12)
    # 2016-11-05 was a Saturday
    assert intensity(6, 5, 4 * 144 + 51, cfg) == pytest.approx(0.8 * expected / 1.5, rel=1e-12)


def test_grid_matches_pointwise():
    cfg = SynthConfig(days=2, seed=1)
    data = generate(cfg)
    conds = slot_conditions(data.weather, cfg.time)
    for slot, row, col in [(0, 1, 1), (100, 5, 6), (287, 10, 10)]:
        assert data.lam[slot, row - 1, col - 1] == pytest.approx(intensity(row, col, slot, cfg, conds[slot]),
                                                                 rel=1e-12)


def test_invalid_config():
    with pytest.raises(ValueError):
        SynthConfig(base_rate=-1)
    with pytest.raises(ValueError):
        SynthConfig(rain_multiplier=0)
    with pytest.raises(ValueError):
        SynthConfig(slot_seconds=7)


def test_same_seed_same_files(tmp_path):
    cfg = SynthConfig(days=1, seed=11)
    a = generate(cfg).write(tmp_path / "a")
    b = generate(cfg).write(tmp_path / "b")
    for key in ("trips", "weather", "lambda"):
        assert a[key].read_bytes() == b[key].read_bytes()
    assert generate(SynthConfig(days=1, seed=12)).trips_csv() != a["trips"].read_text()


def test_workers_do_not_change_output():
    cfg = SynthConfig(days=3, seed=2)
    assert generate(cfg).trips_csv() == generate(cfg, workers=3).trips_csv()


def test_generated_files_ingest_cleanly(one_day):
    cfg, data, _, _ = one_day
    trips, errors = parse_trips(io.StringIO(data.trips_csv()))
    assert errors == [] and len(trips) == len(data.trips)
    weather, werrors = parse_weather(io.StringIO(data.weather_csv()))
    assert werrors == [] and len(weather) == 24
    sample = trips[:: max(1, len(trips) // 500)]
    assert all(cfg.time.start_epoch <= t.start_ts < cfg.time.end_epoch for t in sample)
    assert all(locate_cell(t.pickup_lon, t.pickup_lat, cfg.grid) is not None for t in sample)


def test_lambda_csv(one_day):
    _, data, _, _ = one_day
    lines = data.lambda_csv().splitlines()
    assert lines[0] == "slot,row,col,lambda"
    assert len(lines) == 1 + 144 * 100
    assert lines[1].startswith("0,1,1,")


def test_trips_binned_back_into_their_cells(one_day):
    cfg, data, series, _ = one_day
    assert series.counts.sum() == len(data.trips)


def test_total_within_three_sigma():
    cfg = SynthConfig(days=7, seed=21)
    data = generate(cfg)
    mean, sd = expected_total(data.lam)
    assert sd == pytest.approx(math.sqrt(mean))
    assert abs(len(data.trips) - mean) <= poisson_total_bound(mean)


def test_per_cell_means_within_three_sigma():
    cfg = SynthConfig(days=7, seed=21)
    data = generate(cfg)
    series, drops = build_demand_series(data.trips.records(), cfg.grid, cfg.time)
    assert drops.total == 0
    T = cfg.time.num_slots
    observed_mean = series.counts.sum(axis=0) / T
    lam_sum = data.lam.sum(axis=0)
    sigma_of_mean = np.sqrt(lam_sum) / T
    assert np.all(np.abs(observed_mean - lam_sum / T) <= 3 * sigma_of_mean)


def test_start_day_is_tuesday():
    # 2016-11-01 local was a Tuesday; midnight local is slot 0
    cfg = SynthConfig(days=1)
    assert CHENGDU_START % 86400 == 86400 - 8 * 3600
    assert intensity(1, 1, 0, cfg) == intensity(1, 1, 0, SynthConfig(days=1, weekend_factor=0.5))
