"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are an error so a
typo cannot silently fall back to a default. Relative paths resolve against
the working directory; ``trips``, ``weather`` and ``model`` default to files
inside ``out``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from ridecnn.grid import GridSpec, TimeSpec
from ridecnn.model import CnnConfig, TrainConfig
from ridecnn.synth import CHENGDU_GRID, CHENGDU_START, Hotspot, SynthConfig


class ConfigError(ValueError):
    pass


def _kernel(text: str) -> tuple[int, int]:
    parts = text.lower().replace("x", " ").split()
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ValueError(f"kernel {text!r} must look like '3' or '3x3'")
    return int(parts[0]), int(parts[1])


def _hotspots(text: str) -> tuple[Hotspot, ...]:
    spots = []
    for chunk in text.split(";"):
        if chunk.strip():
            row, col, amp, decay = (v.strip() for v in chunk.split(","))
            spots.append(Hotspot(int(row), int(col), float(amp), float(decay)))
    return tuple(spots)


@dataclass
class RunConfig:
    out: str = "runs/default"
    trips: str = ""
    weather: str = ""
    model: str = ""
    lon_min: float = CHENGDU_GRID.lon_min
    lon_max: float = CHENGDU_GRID.lon_max
    lat_min: float = CHENGDU_GRID.lat_min
    lat_max: float = CHENGDU_GRID.lat_max
    rows: int = 10
    cols: int = 10
    start_epoch: int = CHENGDU_START
    slot_seconds: int = 600
    num_slots: int = 4320
    utc_offset_hours: float = 8.0
    lookback: int = 6
    horizons: int = 6
    train_fraction: float = 0.8
    conv1_filters: int = 32
    conv1_kernel: tuple[int, int] = (3, 3)
    conv2_filters: int = 64
    conv2_kernel: tuple[int, int] = (3, 3)
    dense_units: int = 256
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 10
    validation_fraction: float = 0.1
    seed: int = 0
    synth_days: int = 30
    synth_base_rate: float = 1.5
    synth_hotspots: tuple[Hotspot, ...] = field(default_factory=lambda: SynthConfig().hotspots)
    synth_night_level: float = 0.15
    synth_morning_peak: float = 0.8
    synth_evening_peak: float = 1.0
    synth_weekend_factor: float = 0.85
    synth_rain_multiplier: float = 1.3

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def path(self, key: str, default_name: str) -> Path:
        value = getattr(self, key)
        return Path(value) if value else self.out_dir / default_name

    def grid(self) -> GridSpec:
        return GridSpec(self.lon_min, self.lon_max, self.lat_min, self.lat_max, self.rows, self.cols)

    def time(self) -> TimeSpec:
        return TimeSpec(self.start_epoch, self.num_slots, self.slot_seconds)

    def cnn(self) -> CnnConfig:
        return CnnConfig(self.conv1_filters, self.conv1_kernel, self.conv2_filters, self.conv2_kernel,
                         self.dense_units, self.horizons, self.lookback, self.rows, self.cols)

    def training(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.seed, self.patience,
                           self.validation_fraction)

    def synth(self) -> SynthConfig:
        return SynthConfig(self.grid(), self.start_epoch, self.synth_days, self.slot_seconds, self.utc_offset_hours,
                           self.synth_base_rate, self.synth_hotspots, self.synth_night_level,
                           self.synth_morning_peak, self.synth_evening_peak, self.synth_weekend_factor,
                           self.synth_rain_multiplier, self.seed)

    def validate(self) -> None:
        """Build every derived spec once so inconsistent values fail before any work starts."""
        try:
            self.grid()
            self.time()
            self.cnn()
            self.training()
            self.synth()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        if self.cols < 6:
            raise ConfigError("cols must be at least 6 to hold the context row")


_PARSERS = {
    "conv1_kernel": _kernel,
    "conv2_kernel": _kernel,
    "synth_hotspots": _hotspots,
}


def _convert(name: str, kind, text: str):
    if name in _PARSERS:
        return _PARSERS[name](text)
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text


def parse_config(text: str, source: str = "<config>", overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` lines; dotted keys like ``synth.days`` map to ``synth_days``."""
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        name = key.replace(".", "_")
        if name not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[name] = _convert(name, types[name], value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = RunConfig(**values)
    config.validate()
    return config


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path), overrides)
