"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_acceptance
from oracles import brute_force_counts, conv2d_loops, mae_loop, wmape_loop
from ridecnn.cli import main, run_gradcheck
from ridecnn.grid import GridSpec, TimeSpec, build_demand_series, zone_cell, zone_number
from ridecnn.ingest import TripRecord
from ridecnn.metrics import mae, read_report, wmape
from ridecnn.model import CnnConfig, TrainConfig, build_model, predict, train
from ridecnn.nn import conv2d_forward

DEMO_CONFIG = Path(__file__).parents[1] / "demos" / "chengdu-like.cfg"


def check(name, passed, detail):
    record_acceptance(name, bool(passed), detail)
    assert passed, f"{name}: {detail}"


def test_gradient_integrity():
    start = time.perf_counter()
    errors = [run_gradcheck(seed).max_rel_error for seed in range(10)]
    elapsed = time.perf_counter() - start
    check("gradient integrity", max(errors) < 1e-5 and elapsed < 60,
          f"max rel error {max(errors):.2e} over 10 seeds (< 1e-5), {elapsed:.1f} s (< 60 s)")


def test_convolution_oracle():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        c_in, h, w = rng.integers(1, 9), rng.integers(1, 17), rng.integers(1, 17)
        c_out = rng.integers(1, 5)
        kh, kw = rng.choice([1, 3, 5], 2)
        x = rng.normal(size=(c_in, h, w))
        k = rng.normal(size=(c_out, c_in, kh, kw))
        b = rng.normal(size=c_out)
        mismatches += not np.array_equal(conv2d_forward(x, k, b), conv2d_loops(x, k, b))
    check("convolution oracle", mismatches == 0, f"{mismatches} of 100 random shapes differ bitwise")


def test_binning_oracle():
    rng = np.random.default_rng(99)
    spec = GridSpec(104.04214, 104.12958, 30.65294, 30.72775)
    time_spec = TimeSpec(1477929600, 24)
    n = 10_000
    lon = rng.uniform(104.03, 104.14, n)
    lat = rng.uniform(30.64, 30.74, n)
    edges_lon, edges_lat = spec.lon_edges(), spec.lat_edges()
    lon[:300] = rng.choice(edges_lon, 300)  # points exactly on cell edges
    lat[300:600] = rng.choice(edges_lat, 300)
    ts = rng.integers(time_spec.start_epoch - 1800, time_spec.end_epoch + 1800, n)
    trips = [TripRecord(str(i), int(t), int(t) + 600, float(a), float(b), 104.1, 30.7)
             for i, (t, a, b) in enumerate(zip(ts, lon, lat))]
    series, drops = build_demand_series(trips, spec, time_spec)
    oracle, dropped = brute_force_counts(trips, spec.lon_min, spec.lon_max, spec.lat_min, spec.lat_max, 10, 10,
                                         time_spec.start_epoch, time_spec.slot_seconds, time_spec.num_slots)
    same = np.array_equal(series.counts, oracle)
    total = int(series.counts.sum()) + drops.total
    check("binning oracle", same and total == n and drops.total == dropped,
          f"cell-for-cell match {same}; counts + drops = {total} (expected {n})")


def test_metric_oracles():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n = rng.integers(1, 200)
        y = rng.poisson(rng.uniform(0.5, 20), n).astype(float)
        if y.sum() == 0:
            y[0] = 1.0
        p = rng.uniform(0, 25, n)
        worst = max(worst, abs(wmape(y, p) - wmape_loop(y, p)), abs(mae(y, p) - mae_loop(y, p)))
    exact = wmape(y, y) == 0.0 and wmape(y, np.zeros_like(y)) == 100.0
    check("metric oracles", worst <= 1e-12 and exact,
          f"max deviation {worst:.1e} (<= 1e-12); wmape(y,y)=0 and wmape(y,0)=100 exactly: {exact}")


def test_overfit_sanity(toy_samples):
    assert len(toy_samples) == 20
    start = time.perf_counter()
    _, history = train(build_model(seed=0), toy_samples, TrainConfig(epochs=500, batch_size=20,
                                                                      validation_fraction=0.0))
    elapsed = time.perf_counter() - start
    best = min(history.train_mse)
    check("overfit sanity", best < 1e-3 and elapsed < 60,
          f"train MSE {best:.2e} (< 1e-3) within {len(history.epoch)} epochs, {elapsed:.1f} s (< 60 s)")


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("chengdu")
    start = time.perf_counter()
    for command in ("synth", "train", "evaluate"):
        status = main(["--config", str(DEMO_CONFIG), "--out", str(out), command])
        assert status == 0, f"{command} exited {status}"
    elapsed = time.perf_counter() - start
    return read_report(out / "report.csv"), elapsed


@pytest.mark.slow
def test_ordering_reproduction(full_run):
    report, elapsed = full_run
    cnn, persistence = report.curve("cnn"), report.curve("persistence")
    below = all(c < p for c, p in zip(cnn, persistence)) and len(cnn) == 6
    curve = ", ".join(f"{c:.2f}/{p:.2f}" for c, p in zip(cnn, persistence))
    check("ordering reproduction", below and elapsed < 900,
          f"CNN/persistence WMAPE % by horizon: {curve}; end-to-end {elapsed:.0f} s (< 900 s)")


@pytest.mark.slow
def test_attenuation_shape(full_run):
    cnn = full_run[0].curve("cnn")
    check("attenuation shape", cnn[5] <= 2 * cnn[0],
          f"CNN WMAPE 60 min {cnn[5]:.2f}% <= 2 x 10 min {cnn[0]:.2f}%; curve {[round(c, 2) for c in cnn]}")


def test_determinism(tmp_path):
    cfg = tmp_path / "small.cfg"
    text = DEMO_CONFIG.read_text().replace("num_slots = 4320", "num_slots = 432")
    text = text.replace("synth.days = 30", "synth.days = 3").replace("epochs = 60", "epochs = 2")
    cfg.write_text(text)
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        for command in ("synth", "train", "evaluate"):
            assert main(["--config", str(cfg), "--out", str(out), command]) == 0
        runs.append({f: (out / f).read_bytes() for f in ("model.rcnn", "history.csv", "report.csv",
                                                          "predictions.csv", "scaler.txt")})
    same = [f for f in runs[0] if runs[0][f] == runs[1][f]]
    check("determinism", len(same) == len(runs[0]), f"identical across two runs: {', '.join(sorted(same))}")


def test_zone_convention():
    zones = {zone_number(r, c) for r in range(1, 11) for c in range(1, 11)}
    bijective = zones == set(range(1, 101)) and all(zone_number(*zone_cell(z)) == z for z in range(1, 101))
    check("zone convention", zone_number(6, 6) == 56 and bijective,
          f"zone_number(6,6) = {zone_number(6, 6)}; bijective over 10x10: {bijective}")


def test_multi_step_head():
    net = build_model(CnnConfig(k_max=6), seed=0)
    x = np.random.default_rng(0).uniform(size=(6, 11, 10))
    raw = net.forward(x)
    forecast = predict(net, x)
    ok = raw.shape == (600,) and forecast.values.shape == (6, 10, 10) and \
        np.array_equal(forecast.values, np.maximum(raw, 0).reshape(6, 10, 10))
    check("multi-step head", ok, f"{raw.size} outputs reshaped to {forecast.values.shape}")
