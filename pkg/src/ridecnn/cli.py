"""Command-line pipeline: synth, train, evaluate, predict, gradcheck.

Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ridecnn.config import ConfigError, RunConfig, load_config
from ridecnn.features import Scaler, WeatherGapError, build_contexts, compose_frames, prepare_datasets
from ridecnn.grid import TimeSpec, build_demand_series, zone_number
from ridecnn.ingest import parse_trips, parse_weather
from ridecnn.metrics import evaluate, export_predictions, export_report
from ridecnn.model import (ModelFileError, build_model, cnn_predictor, load_model, persistence_predictor, predict,
                           save_model, train)
from ridecnn.nn import NumericError, count_parameters, gradient_check
from ridecnn.synth import generate

log = logging.getLogger("ridecnn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

GRADCHECK_TOLERANCE = 1e-5


class DataError(RuntimeError):
    pass


def _read_inputs(cfg: RunConfig):
    trips_path, weather_path = cfg.path("trips", "trips.csv"), cfg.path("weather", "weather.csv")
    for p in (trips_path, weather_path):
        if not p.exists():
            raise ConfigError(f"input file {p} does not exist")
    with open(trips_path, newline="") as fh:
        trips, trip_errors = parse_trips(fh)
    with open(weather_path, newline="") as fh:
        weather, weather_errors = parse_weather(fh)
    for name, errors in (("trip", trip_errors), ("weather", weather_errors)):
        if errors:
            log.warning("%d malformed %s rows skipped (first: line %d, %s)", len(errors), name,
                        errors[0].line, errors[0].reason)
    if not weather:
        raise DataError(f"no usable weather rows in {weather_path}")
    return trips, weather


def _datasets(cfg: RunConfig, workers: int):
    trips, weather = _read_inputs(cfg)
    series, drops = build_demand_series(trips, cfg.grid(), cfg.time(), workers=workers)
    log.info("%d trips binned, %d outside the time range, %d outside the grid",
             int(series.counts.sum()), drops.out_of_time, drops.out_of_bounds)
    try:
        contexts = build_contexts(cfg.time(), cfg.utc_offset_hours, weather)
        return prepare_datasets(series, contexts, cfg.lookback, cfg.horizons, cfg.train_fraction)
    except WeatherGapError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def cmd_synth(cfg: RunConfig, args) -> int:
    data = generate(cfg.synth(), workers=args.workers)
    paths = data.write(cfg.out_dir)
    print(f"wrote {len(data.trips)} trips, {len(data.weather)} weather rows")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    scaler, train_set, test_set = _datasets(cfg, args.workers)
    network = build_model(cfg.cnn(), cfg.seed)
    print(f"training on {len(train_set)} samples ({len(test_set)} held out), "
          f"{count_parameters(network)} parameters")
    network, history = train(network, train_set, cfg.training())
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    model_path = cfg.path("model", "model.rcnn")
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(network, model_path)
    (out / "history.csv").write_text(history.to_csv())
    with open(out / "scaler.txt", "w") as fh:
        scaler.save(fh)
    best = history.best_epoch
    print(f"best epoch {best} of {len(history.epoch)}; model written to {model_path}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    model_path = Path(args.model) if args.model else cfg.path("model", "model.rcnn")
    if not model_path.exists():
        raise ConfigError(f"model file {model_path} does not exist; run 'train' first or pass --model")
    network = load_model(model_path)
    _, _, test_set = _datasets(cfg, args.workers)
    k = cfg.horizons
    models = {"cnn": cnn_predictor(network), "persistence": persistence_predictor(k)}
    report, predictions = evaluate(models, test_set, k, slot_minutes=cfg.slot_seconds // 60)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    export_report(report, out / "report.csv")
    export_predictions(out / "predictions.csv", test_set, predictions)
    print(f"{'model':<12} {'minutes':>7} {'WMAPE %':>9} {'MAE':>8}")
    for r in sorted(report.rows, key=lambda r: (r.model, r.horizon)):
        print(f"{r.model:<12} {r.horizon * report.slot_minutes:>7} {r.wmape_percent:>9.2f} {r.mae:>8.4f}")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    model_path = Path(args.model) if args.model else cfg.path("model", "model.rcnn")
    scaler_path = Path(args.scaler) if args.scaler else cfg.out_dir / "scaler.txt"
    for p in (model_path, scaler_path):
        if not p.exists():
            raise ConfigError(f"{p} does not exist")
    if args.trips:
        cfg.trips = args.trips
    if args.weather:
        cfg.weather = args.weather
    network = load_model(model_path)
    with open(scaler_path) as fh:
        scaler = Scaler.load(fh)
    trips, weather = _read_inputs(cfg)

    m, slot = cfg.lookback, cfg.slot_seconds
    now = int(args.now) - (int(args.now) - cfg.start_epoch) % slot
    window = TimeSpec(now - m * slot, m, slot)
    series, _ = build_demand_series(trips, cfg.grid(), window, workers=args.workers)
    try:
        contexts = build_contexts(window, cfg.utc_offset_hours, weather)
    except WeatherGapError as exc:
        raise DataError(str(exc)) from exc
    contexts[:, 2] = (window.start_epoch - cfg.start_epoch) // slot + np.arange(m)
    frames = compose_frames(series.counts, contexts, scaler)
    forecast = predict(network, frames)

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / "forecast.csv"
    with open(path, "w") as fh:
        fh.write("horizon_minutes,slot_start,row,col,zone,demand,demand_rounded\n")
        for h in range(network.config.k_max):
            for r in range(cfg.rows):
                for c in range(cfg.cols):
                    fh.write(f"{(h + 1) * slot // 60},{now + h * slot},{r + 1},{c + 1},"
                             f"{zone_number(r + 1, c + 1, cfg.cols, cfg.rows)},"
                             f"{forecast.values[h, r, c]:.4f},{forecast.rounded[h, r, c]}\n")
    print(f"forecast for {network.config.k_max} slots from {now} written to {path}")
    return EXIT_OK


def run_gradcheck(seed: int, cfg: RunConfig | None = None):
    """Gradient check of a freshly initialised network on a random sample drawn from ``seed``."""
    cnn = (cfg or RunConfig()).cnn()
    network = build_model(cnn, seed)
    rng = np.random.default_rng([seed, 1])
    x = rng.uniform(0.0, 1.0, cnn.input_shape)
    y = rng.poisson(3.0, cnn.zones * cnn.k_max).astype(float)
    return gradient_check(network, x, y, eps=1e-5, n_params=200, seed=seed)


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    result = run_gradcheck(cfg.seed, cfg)
    print(f"max relative error {result.max_rel_error:.6e} over {result.checked} parameters "
          f"({result.excluded} excluded at activation kinks; worst {result.worst})")
    return EXIT_OK if result.max_rel_error < GRADCHECK_TOLERANCE else EXIT_NUMERIC


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
}


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags without defaults so either position works
    def default(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default(None), help="key = value run configuration file")
    common.add_argument("--seed", type=int, default=default(None), help="overrides the configured seed")
    common.add_argument("--workers", type=int, default=default(1),
                        help="threads for binning and synthesis; results match single-worker mode")
    common.add_argument("--out", default=default(None), help="output directory (overrides 'out' in the config)")
    common.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ridecnn", description=__doc__.splitlines()[0],
                                     parents=[_global_flags(False)])
    common = _global_flags(True)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate synthetic trips, weather and ground-truth intensity")
    sub.add_parser("train", parents=[common], help="train the CNN; writes model, history and scaler")
    p = sub.add_parser("evaluate", parents=[common], help="score CNN and persistence on the held-out tail")
    p.add_argument("--model", help="model file (default: the configured one)")
    p = sub.add_parser("predict", parents=[common], help="forecast the next slots from recent trips")
    p.add_argument("--model")
    p.add_argument("--scaler", help="scaler manifest (default: <out>/scaler.txt)")
    p.add_argument("--trips")
    p.add_argument("--weather")
    p.add_argument("--now", type=int, required=True, help="unix time of the first predicted slot")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the default network")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        overrides = {"seed": args.seed, "out": args.out}
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
            cfg.validate()
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ModelFileError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
