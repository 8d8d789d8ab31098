import numpy as np
import pytest

from ridecnn.features import build_contexts, build_dataset, fit_scaler
from ridecnn.grid import build_demand_series
from ridecnn.synth import SynthConfig, generate

_acceptance_lines = []


def record_acceptance(name, passed, detail):
    _acceptance_lines.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _acceptance_lines:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def one_day():
    """A one-day synthetic run, binned, with contexts."""
    cfg = SynthConfig(days=1, seed=3)
    data = generate(cfg)
    series, _ = build_demand_series(data.trips.records(), cfg.grid, cfg.time)
    contexts = build_contexts(cfg.time, cfg.utc_offset_hours, data.weather)
    return cfg, data, series, contexts


@pytest.fixture(scope="session")
def toy_samples(one_day):
    """Twenty consecutive samples from the one-day run."""
    _, _, series, contexts = one_day
    scaler = fit_scaler(series.counts, contexts)
    return build_dataset(series, contexts, scaler, 6, 6)[60:80]
