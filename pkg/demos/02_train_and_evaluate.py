"""
Training the CNN against the persistence baseline
=================================================

A shortened version of the full 30-day run: seven synthetic days, a few
epochs, then WMAPE and MAE per horizon for both models.
"""

from ridecnn.features import build_contexts, prepare_datasets
from ridecnn.grid import build_demand_series
from ridecnn.metrics import evaluate
from ridecnn.model import CnnConfig, TrainConfig, build_model, cnn_predictor, persistence_predictor, train
from ridecnn.nn import count_parameters
from ridecnn.synth import SynthConfig, generate

cfg = SynthConfig(days=7, seed=4)
data = generate(cfg)
series, _ = build_demand_series(data.trips.records(), cfg.grid, cfg.time)
contexts = build_contexts(cfg.time, cfg.utc_offset_hours, data.weather)

# scaler fitted on the earliest 80% only; targets stay in raw counts
scaler, train_set, test_set = prepare_datasets(series, contexts, m=6, k_max=6, train_fraction=0.8)
print(f"{len(train_set)} training and {len(test_set)} test samples")

network = build_model(CnnConfig(), seed=0)
print(f"{count_parameters(network)} parameters")
network, history = train(network, train_set, TrainConfig(epochs=8, seed=0))
print(history.to_csv())

report, _ = evaluate({"cnn": cnn_predictor(network), "persistence": persistence_predictor(6)}, test_set)
print(f"{'minutes':>7} {'cnn':>8} {'persist':>8}")
for h, (c, p) in enumerate(zip(report.curve("cnn"), report.curve("persistence")), start=1):
    print(f"{10 * h:>7} {c:>8.2f} {p:>8.2f}")
