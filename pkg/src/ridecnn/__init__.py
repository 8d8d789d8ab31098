"""Context-aware multi-step ride-hailing demand prediction with a small numpy CNN."""

from ridecnn.grid import DemandSeries, GridSpec, TimeSpec, build_demand_series, locate_cell, zone_number
from ridecnn.ingest import RowError, TripRecord, WeatherRecord, encode_condition, parse_trips, parse_weather
from ridecnn.metrics import evaluate, export_report, mae, wmape
from ridecnn.model import CnnConfig, TrainConfig, build_model, load_model, predict, save_model, train

__version__ = "0.1.0"

__all__ = [
    "CnnConfig",
    "DemandSeries",
    "GridSpec",
    "RowError",
    "TimeSpec",
    "TrainConfig",
    "TripRecord",
    "WeatherRecord",
    "build_demand_series",
    "build_model",
    "encode_condition",
    "evaluate",
    "export_report",
    "load_model",
    "locate_cell",
    "mae",
    "parse_trips",
    "parse_weather",
    "predict",
    "save_model",
    "train",
    "wmape",
    "zone_number",
]
