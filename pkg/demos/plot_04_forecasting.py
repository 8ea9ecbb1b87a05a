"""
Forecasting with an LSTM-HNN
============================

Each series is encoded by a shared LSTM; the encodings are mixed by an
HNN whose graph comes from the training-period correlations.
"""
import numpy as np

from homnet import bench, hnn
from homnet.synthetic import seasonal_ar_series
from homnet.timeseries import forecaster_for, make_windows, predict_split, train_forecaster

s = seasonal_ar_series(n_series=5, length=1500, seed=0)
splits = make_windows(s, lookback=24, horizon=3)
print("samples:", len(splits.train), len(splits.valid), len(splits.test))

model = forecaster_for(s, splits, hidden=16, seed=0)
print("HNN layer sizes:", model.unit.sizes)

cfg = hnn.TrainConfig(lr=3e-3, max_epochs=20, patience=5, seed=0)
model, history = train_forecaster(model, splits, cfg)
print("best validation RSE:", min(h["valid_loss"] for h in history))

###############################################################################
# Compare against the persistence forecast on the test split.
y_true, y_pred = predict_split(model, splits, "test")
naive = splits.denormalize(bench.persistence_forecast(splits.test.x))
print(f"RSE  {bench.rse(y_true, y_pred):.4f}  (persistence {bench.rse(y_true, naive):.4f})")
print(f"CORR {bench.corr_metric(y_true, y_pred):.4f}")
print("mean predictor RSE:", bench.rse(y_true, np.full_like(y_true, y_true.mean())))
