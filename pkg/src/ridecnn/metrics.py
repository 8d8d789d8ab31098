"""Forecast error metrics, per-horizon evaluation and report export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ridecnn.features import SampleSet


class UndefinedMetricError(ValueError):
    pass


def _pair(observed, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(observed, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if y.shape != p.shape:
        raise ValueError(f"observed has {y.size} values, predicted has {p.size}")
    if y.size == 0:
        raise ValueError("metrics need at least one value")
    return y, p


def wmape(observed, predicted) -> float:
    """Weighted MAPE in percent: 100 * sum|y - yhat| / sum|y|."""
    y, p = _pair(observed, predicted)
    # correctly rounded sums keep the result independent of summation order
    denom = math.fsum(np.abs(y))
    if denom == 0:
        raise UndefinedMetricError("undefined WMAPE: observed values sum to zero")
    return 100.0 * math.fsum(np.abs(y - p)) / denom


def mae(observed, predicted) -> float:
    """Mean absolute error, (1/n) * sum|y - yhat|."""
    y, p = _pair(observed, predicted)
    return math.fsum(np.abs(y - p)) / y.size


@dataclass
class MetricRow:
    model: str
    horizon: int
    wmape_percent: float
    mae: float
    n: int
    error: str = ""


@dataclass
class MetricsReport:
    rows: list[MetricRow] = field(default_factory=list)
    slot_minutes: int = 10

    def get(self, model: str, horizon: int) -> MetricRow:
        for row in self.rows:
            if row.model == model and row.horizon == horizon:
                return row
        raise KeyError((model, horizon))

    def curve(self, model: str) -> list[float]:
        """WMAPE by horizon, the error attenuation curve."""
        return [r.wmape_percent for r in sorted(self.rows, key=lambda r: r.horizon) if r.model == model]

    def models(self) -> list[str]:
        return sorted({r.model for r in self.rows})


Predictor = Callable[[SampleSet], np.ndarray]


def evaluate(models: Mapping[str, Predictor], samples: SampleSet, k_max: int | None = None,
             slot_minutes: int = 10) -> tuple[MetricsReport, dict[str, np.ndarray]]:
    """Pool errors over every test sample and zone, separately per model and horizon.

    Each predictor maps a ``SampleSet`` to an (N, k_max, rows, cols) array.
    Returns the report plus each model's prediction array. A metric that
    cannot be computed is recorded as NaN with the reason in ``error``.
    """
    if len(samples) == 0:
        raise ValueError("evaluation needs a non-empty test set")
    k_max = k_max or samples.k_max
    observed = samples.target_matrices()
    report = MetricsReport(slot_minutes=slot_minutes)
    predictions = {}
    for name in sorted(models):
        pred = np.asarray(models[name](samples), dtype=float)
        if pred.shape != observed.shape:
            raise ValueError(f"model {name!r} returned shape {pred.shape}, expected {observed.shape}")
        predictions[name] = pred
        for h in range(1, k_max + 1):
            y, p = observed[:, h - 1], pred[:, h - 1]
            try:
                row = MetricRow(name, h, wmape(y, p), mae(y, p), y.size)
            except ValueError as exc:
                row = MetricRow(name, h, math.nan, math.nan, y.size, str(exc))
            report.rows.append(row)
    return report, predictions


def export_report(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("model", "horizon_minutes", "wmape_percent", "mae", "n"))
        for r in sorted(report.rows, key=lambda r: (r.model, r.horizon)):
            writer.writerow((r.model, r.horizon * report.slot_minutes, f"{r.wmape_percent:.4f}", f"{r.mae:.4f}", r.n))


def read_report(path, slot_minutes: int = 10) -> MetricsReport:
    with open(path, newline="") as fh:
        rows = [MetricRow(rec["model"], int(rec["horizon_minutes"]) // slot_minutes, float(rec["wmape_percent"]),
                          float(rec["mae"]), int(rec["n"])) for rec in csv.DictReader(fh)]
    return MetricsReport(rows, slot_minutes)


def export_predictions(path, samples: SampleSet, predictions: Mapping[str, np.ndarray]) -> None:
    """Long format ``slot,zone,horizon,observed,predicted,model``; slot is the predicted slot index."""
    observed = samples.target_matrices().reshape(len(samples), samples.k_max, -1)
    n, k, zones = observed.shape
    slots = (samples.anchors[:, None, None] + np.arange(k)[None, :, None]) + np.zeros((1, 1, zones), dtype=int)
    zone_ids = np.broadcast_to(np.arange(1, zones + 1), (n, k, zones))
    horizons = np.broadcast_to(np.arange(1, k + 1)[None, :, None], (n, k, zones))
    with open(Path(path), "w") as fh:
        fh.write("slot,zone,horizon,observed,predicted,model\n")
        for name in sorted(predictions):
            pred = predictions[name].reshape(n, k, zones)
            cols = zip(slots.ravel(), zone_ids.ravel(), horizons.ravel(), observed.ravel(), pred.ravel())
            fh.writelines(f"{s},{z},{h},{int(o)},{p:.4f},{name}\n" for s, z, h, o, p in cols)
