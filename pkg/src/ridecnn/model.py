"""The demand CNN: assembly, training, inference, persistence baseline and model files."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ridecnn.features import SampleSet
from ridecnn.nn import (Adam, Conv2D, Dense, Flatten, MaxPool2D, NumericError, ReLU, Sequential,
                        count_parameters, init_params, mse_loss)

log = logging.getLogger(__name__)

FORMAT_TAG = "ridecnn-model"
FORMAT_VERSION = 1

# published total for this architecture; this build's count depends on the configured filters
REFERENCE_PARAMETER_COUNT = 172_452


@dataclass(frozen=True)
class CnnConfig:
    conv1_filters: int = 32
    conv1_kernel: tuple[int, int] = (3, 3)
    conv2_filters: int = 64
    conv2_kernel: tuple[int, int] = (3, 3)
    dense_units: int = 256
    k_max: int = 6
    lookback: int = 6
    rows: int = 10
    cols: int = 10

    def __post_init__(self):
        for name in ("conv1_kernel", "conv2_kernel"):
            kernel = tuple(int(v) for v in getattr(self, name))
            object.__setattr__(self, name, kernel)
            if len(kernel) != 2 or kernel[0] % 2 == 0 or kernel[1] % 2 == 0:
                raise ValueError(f"{name} {kernel} must be two odd sizes")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if min(self.dense_units, self.conv1_filters, self.conv2_filters, self.lookback) < 1:
            raise ValueError("layer widths and lookback must be at least 1")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.lookback, self.rows + 1, self.cols)

    @property
    def zones(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 10
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


class Network(Sequential):
    """conv-relu-pool, conv-relu-pool, flatten, dense-relu, linear output of zones * k_max."""

    def __init__(self, config: CnnConfig):
        c = config
        layers = [
            Conv2D(c.lookback, c.conv1_filters, *c.conv1_kernel, name="conv1"),
            ReLU("relu1"),
            MaxPool2D(2, "pool1"),
            Conv2D(c.conv1_filters, c.conv2_filters, *c.conv2_kernel, name="conv2"),
            ReLU("relu2"),
            MaxPool2D(2, "pool2"),
            Flatten(),
        ]
        probe = Sequential(layers, c.input_shape)
        layers += [
            Dense(probe.output_shape[0], c.dense_units, "dense"),
            ReLU("relu3"),
            Dense(c.dense_units, c.zones * c.k_max, "output"),
        ]
        super().__init__(layers, c.input_shape)
        self.config = config


def build_model(config: CnnConfig | None = None, seed: int = 0) -> Network:
    return init_params(Network(config or CnnConfig()), seed)


@dataclass
class History:
    epoch: list[int] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)
    val_wmape: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_csv(self) -> str:
        lines = ["epoch,train_mse,val_wmape_percent"]
        lines += [f"{e},{m:.10g},{v:.10g}" for e, m, v in zip(self.epoch, self.train_mse, self.val_wmape)]
        return "\n".join(lines) + "\n"


def _pooled_wmape(pred: np.ndarray, target: np.ndarray) -> float:
    denom = np.abs(target).sum()
    if denom == 0:
        return math.nan
    return float(100.0 * np.abs(target - pred).sum() / denom)


def _forward_batched(network: Network, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([network.forward(inputs[i:i + batch_size]) for i in range(0, len(inputs), batch_size)])


def train(network: Network, samples: SampleSet, config: TrainConfig | None = None) -> tuple[Network, History]:
    """Mini-batch Adam on MSE against raw-count targets.

    The chronological tail ``validation_fraction`` of ``samples`` is held
    out; the weights with the best validation WMAPE (of clamped predictions)
    are restored at the end. Without a validation tail the final weights are
    kept.
    """
    config = config or TrainConfig()
    n = len(samples)
    if n == 0:
        raise ValueError("cannot train on an empty sample set")
    n_val = int(n * config.validation_fraction)
    if config.validation_fraction > 0 and n_val == 0 and n > 1:
        n_val = 1
    fit, val = samples[:n - n_val], samples[n - n_val:]
    x, y = fit.inputs, fit.targets

    rng = np.random.default_rng(config.seed)
    opt = Adam(lr=config.learning_rate)
    params = network.params
    history = History()
    best_score, best_params, since_best = math.inf, None, 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grad = mse_loss(network.forward(x[idx]), y[idx])
            if not math.isfinite(loss):
                raise NumericError(f"training loss became {loss} at epoch {epoch}; "
                                   f"try a smaller learning_rate than {config.learning_rate}")
            network.backward(grad)
            opt.step(params, network.grads)
            total += loss * len(idx)
        history.epoch.append(epoch)
        history.train_mse.append(total / len(x))

        score = math.nan
        if n_val:
            pred = np.maximum(_forward_batched(network, val.inputs), 0.0)
            score = _pooled_wmape(pred, val.targets)
        history.val_wmape.append(score)
        log.info("epoch %d train_mse=%.6g val_wmape=%.4f", epoch, history.train_mse[-1], score)

        if n_val and math.isfinite(score):
            if score < best_score:
                best_score, since_best = score, 0
                best_params = [p.copy() for p in params]
                history.best_epoch = epoch
            else:
                since_best += 1
                if since_best >= config.patience:
                    history.stopped_early = epoch < config.epochs
                    break

    if best_params is not None:
        for p, best in zip(params, best_params):
            p[...] = best
    else:
        history.best_epoch = len(history.epoch)
    return network, history


class Forecast(NamedTuple):
    values: np.ndarray   # (..., k_max, rows, cols), clamped at 0
    rounded: np.ndarray  # same shape, nearest integer


def predict(network: Network, inputs: np.ndarray) -> Forecast:
    """Forecast k_max demand matrices per input window, horizon-major, zone order row by row."""
    inputs = np.asarray(inputs, dtype=float)
    cfg = network.config
    single = inputs.shape == cfg.input_shape
    batch = inputs[None] if single else inputs
    if batch.ndim != 4 or batch.shape[1:] != cfg.input_shape:
        raise ValueError(f"input shape {inputs.shape} does not match {cfg.input_shape}")
    raw = _forward_batched(network, batch)
    values = np.maximum(raw, 0.0).reshape(len(batch), cfg.k_max, cfg.rows, cfg.cols)
    if single:
        values = values[0]
    return Forecast(values, np.rint(values).astype(np.int64))


def persistence_predict(last_demand: np.ndarray, k_max: int) -> np.ndarray:
    """Repeat the last observed demand matrix for every horizon: (..., k_max, rows, cols)."""
    last = np.asarray(last_demand, dtype=float)
    return np.repeat(np.expand_dims(last, -3), k_max, axis=-3)


def cnn_predictor(network: Network):
    return lambda samples: predict(network, samples.inputs).values


def persistence_predictor(k_max: int):
    return lambda samples: persistence_predict(samples.last_demand, k_max)


# --------------------------------------------------------------------------
# model files: text manifest, "end" line, then little-endian float64 blocks


def _manifest(network: Network) -> str:
    cfg = asdict(network.config)
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}"]
    for key, value in cfg.items():
        text = " ".join(str(v) for v in value) if isinstance(value, tuple) else str(value)
        lines.append(f"config {key} {text}")
    for name, p in network.named_params():
        lines.append(f"param {name} " + " ".join(str(d) for d in p.shape))
    lines.append("end")
    return "\n".join(lines) + "\n"


def model_bytes(network: Network) -> bytes:
    blob = bytearray(_manifest(network).encode("ascii"))
    for p in network.params:
        blob += np.ascontiguousarray(p, dtype="<f8").tobytes()
    return bytes(blob)


def save_model(network: Network, path) -> None:
    Path(path).write_bytes(model_bytes(network))


class ModelFileError(ValueError):
    pass


def model_from_bytes(data: bytes) -> Network:
    marker = data.find(b"\nend\n")
    if marker < 0:
        raise ModelFileError("model file has no manifest terminator (truncated or not a model file)")
    try:
        header = data[:marker].decode("ascii").split("\n")
    except UnicodeDecodeError as exc:
        raise ModelFileError("model manifest is not ASCII text") from exc
    first = header[0].split()
    if len(first) != 2 or first[0] != FORMAT_TAG:
        raise ModelFileError(f"not a {FORMAT_TAG} file (header {header[0]!r})")
    if first[1] != str(FORMAT_VERSION):
        raise ModelFileError(f"model format version {first[1]} unsupported (expected {FORMAT_VERSION})")

    fields, shapes = {}, []
    for line in header[1:]:
        kind, name, *values = line.split()
        if kind == "config":
            fields[name] = tuple(int(v) for v in values) if name.endswith("_kernel") else int(values[0])
        elif kind == "param":
            shapes.append((name, tuple(int(v) for v in values)))
        else:
            raise ModelFileError(f"unexpected manifest line {line!r}")
    try:
        network = Network(CnnConfig(**fields))
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"invalid model config: {exc}") from exc

    expected = [(name, p.shape) for name, p in network.named_params()]
    if shapes != expected:
        raise ModelFileError("parameter layout in manifest does not match the configured network")
    body = memoryview(data)[marker + len(b"\nend\n"):]
    need = sum(p.size for p in network.params) * 8
    if len(body) != need:
        raise ModelFileError(f"parameter payload has {len(body)} bytes, expected {need} (truncated or padded file)")
    offset = 0
    for p in network.params:
        size = p.size * 8
        p[...] = np.frombuffer(body[offset:offset + size], dtype="<f8").reshape(p.shape)
        offset += size
    return network


def load_model(path) -> Network:
    return model_from_bytes(Path(path).read_bytes())


__all__ = [
    "CnnConfig",
    "Forecast",
    "History",
    "ModelFileError",
    "Network",
    "REFERENCE_PARAMETER_COUNT",
    "TrainConfig",
    "build_model",
    "cnn_predictor",
    "count_parameters",
    "load_model",
    "persistence_predict",
    "persistence_predictor",
    "predict",
    "save_model",
    "train",
]
