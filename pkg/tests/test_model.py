import time

import numpy as np
import pytest

from ridecnn.features import SampleSet
from ridecnn.model import (CnnConfig, ModelFileError, TrainConfig, build_model, load_model, model_bytes,
                           model_from_bytes, persistence_predict, predict, save_model, train)
from ridecnn.nn import count_parameters


def test_output_length():
    assert build_model(CnnConfig(k_max=1)).output_shape == (100,)
    assert build_model(CnnConfig(k_max=6)).output_shape == (600,)


def test_layer_shapes():
    net = build_model()
    shape, seen = net.input_shape, {}
    for layer in net.layers:
        shape = layer.output_shape(shape)
        seen[layer.name] = shape
    assert seen["pool1"] == (32, 5, 5) and seen["pool2"] == (64, 2, 2) and seen["flatten"] == (256,)


def test_default_parameter_count():
    # conv1 6*9*32+32, conv2 32*9*64+64, dense 256*256+256, output 256*600+600
    assert count_parameters(build_model()) == 1760 + 18496 + 65792 + 154200


def test_build_is_deterministic():
    a, b = build_model(seed=3), build_model(seed=3)
    assert model_bytes(a) == model_bytes(b)
    assert model_bytes(a) != model_bytes(build_model(seed=4))


def test_invalid_config():
    with pytest.raises(ValueError):
        CnnConfig(conv1_kernel=(2, 3))
    with pytest.raises(ValueError):
        CnnConfig(k_max=0)
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)


def _random_set(rng, n, k=6):
    inputs = rng.uniform(0, 1, (n, 6, 11, 10))
    targets = rng.poisson(2.0, (n, 100 * k)).astype(float)
    last = rng.poisson(2.0, (n, 10, 10))
    return SampleSet(inputs, targets, np.arange(n) + 6, last, k)


def test_training_is_deterministic(rng):
    samples = _random_set(rng, 24)
    cfg = TrainConfig(epochs=3, batch_size=8, seed=5)
    a, ha = train(build_model(seed=1), samples, cfg)
    b, hb = train(build_model(seed=1), samples, cfg)
    assert model_bytes(a) == model_bytes(b)
    assert ha.to_csv() == hb.to_csv()


def test_history_csv(rng):
    _, history = train(build_model(), _random_set(rng, 20), TrainConfig(epochs=2, batch_size=10))
    lines = history.to_csv().splitlines()
    assert lines[0] == "epoch,train_mse,val_wmape_percent"
    assert len(lines) == 3 and lines[1].startswith("1,")


def test_early_stopping_restores_best(rng):
    samples = _random_set(rng, 30)
    net, history = train(build_model(), samples,
                         TrainConfig(epochs=200, batch_size=8, learning_rate=1e-2, patience=2, validation_fraction=0.2))
    assert history.stopped_early
    assert len(history.epoch) == history.best_epoch + 2
    assert min(history.val_wmape) == history.val_wmape[history.best_epoch - 1]
    val = samples[24:]
    pred = predict(net, val.inputs).values.reshape(len(val), -1)
    restored = 100 * np.abs(val.targets - pred).sum() / val.targets.sum()
    assert restored == pytest.approx(history.val_wmape[history.best_epoch - 1], rel=1e-12)


def test_overfits_small_set(toy_samples):
    start = time.perf_counter()
    net, history = train(build_model(seed=0), toy_samples,
                         TrainConfig(epochs=500, batch_size=20, validation_fraction=0.0))
    assert time.perf_counter() - start < 60
    assert history.train_mse[-1] < 1e-3


def test_predict_clamps_and_reshapes():
    net = build_model()
    net.layers[-1].weights[...] = 0
    net.layers[-1].bias[...] = np.where(np.arange(600) % 2, -1.5, 2.6)
    forecast = predict(net, np.zeros((6, 11, 10)))
    assert forecast.values.shape == (6, 10, 10)
    assert forecast.values.min() == 0
    assert set(np.unique(forecast.rounded)) == {0, 3}
    assert forecast.values[0, 0, 0] == 2.6 and forecast.values[0, 0, 1] == 0
    batch = predict(net, np.zeros((3, 6, 11, 10)))
    assert batch.values.shape == (3, 6, 10, 10)


def test_predict_rejects_wrong_shape():
    with pytest.raises(ValueError):
        predict(build_model(), np.zeros((5, 11, 10)))


def test_persistence(rng):
    last = rng.integers(0, 9, (4, 10, 10))
    pred = persistence_predict(last, 6)
    assert pred.shape == (4, 6, 10, 10)
    assert all(np.array_equal(pred[:, h], last) for h in range(6))


def test_save_load_roundtrip(tmp_path):
    net = build_model(CnnConfig(conv1_filters=4, conv2_filters=5, dense_units=7, k_max=2), seed=9)
    path = tmp_path / "m.rcnn"
    save_model(net, path)
    again = load_model(path)
    assert again.config == net.config
    assert model_bytes(again) == path.read_bytes()
    x = np.random.default_rng(0).uniform(size=(6, 11, 10))
    assert np.array_equal(predict(again, x).values, predict(net, x).values)


def test_corrupt_files_raise():
    data = model_bytes(build_model(CnnConfig(conv1_filters=2, conv2_filters=2, dense_units=3)))
    with pytest.raises(ModelFileError, match="bytes"):
        model_from_bytes(data[:-8])
    with pytest.raises(ModelFileError, match="bytes"):
        model_from_bytes(data + b"\0" * 8)
    with pytest.raises(ModelFileError, match="terminator"):
        model_from_bytes(data[:40])
    with pytest.raises(ModelFileError, match="version"):
        model_from_bytes(data.replace(b"ridecnn-model 1", b"ridecnn-model 9", 1))
    with pytest.raises(ModelFileError):
        model_from_bytes(b"PNG" + data)
    with pytest.raises(ModelFileError, match="layout"):
        model_from_bytes(data.replace(b"param output.bias 600", b"param output.bias 601", 1))
