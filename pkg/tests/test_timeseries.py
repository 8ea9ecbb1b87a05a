import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from homnet import hnn
from homnet.synthetic import seasonal_ar_series
from homnet.timeseries import (LstmEncoder, LstmHnn, MultivariateSeries, build_forecaster,
                               forecaster_for, load_forecaster, load_series,
                               lstm_forward, lstm_hnn_forward, make_windows,
                               predict_split, save_forecaster, train_forecaster,
                               window_starts, write_forecasts)

from test_hnn import masked_dense_forward


def ramp(length=100, n=4):
    t = np.arange(length, dtype=float)
    return MultivariateSeries(np.column_stack([t * (k + 1) + np.sin(t * (k + 1)) for k in range(n)]))


def test_window_count_and_last_target():
    assert len(window_starts(100, 24, 3)) == 74
    s = seasonal_ar_series(4, 100, seed=0)
    sp = make_windows(s, 24, 3)
    assert sp.n_samples == 74
    assert sp.train.target_index[0] == 24 + 3 - 1
    assert sp.test.target_index[-1] == 99


def test_window_contents():
    s = ramp()
    sp = make_windows(s, 5, 2)
    z = (s.values - sp.mean) / sp.std
    i = 7
    start = sp.train.window_start[i]
    np.testing.assert_array_equal(sp.train.x[i], z[start:start + 5])
    np.testing.assert_array_equal(sp.train.y[i], z[start + 5 - 1 + 2])


def test_no_leakage_between_splits():
    sp = make_windows(ramp(300), 24, 6)
    assert sp.train.target_index.max() < sp.valid.window_start.min()
    assert sp.valid.target_index.max() < sp.test.window_start.min()
    assert sp.train_rows == sp.train.target_index.max() + 1


def test_normalization_uses_train_rows_only():
    s = ramp(200)
    sp = make_windows(s, 10, 3)
    np.testing.assert_allclose(sp.mean, s.values[:sp.train_rows].mean(axis=0))
    np.testing.assert_allclose(sp.denormalize(sp.test.y), s.values[sp.test.target_index])


def test_short_series_rejected():
    with pytest.raises(ValueError, match="too short"):
        make_windows(ramp(30), 24, 3)
    with pytest.raises(ValueError):
        make_windows(ramp(200), 5, 3, split=(0.5, 0.5, 0.5))


def test_load_series(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("1 2\n3 4\n5 6\n")
    s = load_series(f)
    assert s.values.shape == (3, 2) and s.names == ("s0", "s1")
    g = tmp_path / "h.csv"
    g.write_text("a,b\n1,2\n")
    assert load_series(g).names == ("a", "b")
    f.write_text("1 2\n3\n")
    with pytest.raises(ValueError, match="ragged"):
        load_series(f)


def test_zero_lstm_gives_zero_state():
    e = LstmEncoder(5, init="zeros")
    np.testing.assert_array_equal(lstm_forward(e, np.arange(8.0)), np.zeros(5))


def test_single_step_closed_form():
    e = LstmEncoder(3, seed=1)
    x = 0.7
    z = x * e.w_in[0] + e.bias
    i, f, g, o = expit(z[:3]), expit(z[3:6]), np.tanh(z[6:9]), expit(z[9:])
    c = i * g  # zero initial cell
    np.testing.assert_allclose(lstm_forward(e, [x]), o * np.tanh(c), rtol=1e-14)
    assert np.all(f > 0)


def test_bptt_matches_finite_differences():
    e = LstmEncoder(3, seed=2)
    seqs = np.random.default_rng(0).normal(size=(4, 5))
    w = np.random.default_rng(1).normal(size=(4, 3))
    h, cache = e.forward(seqs)
    grads = e.backward(cache, w)
    for p, g in zip(e.parameters(), grads):
        flat = p.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + 1e-6
            up = float((e.forward(seqs)[0] * w).sum())
            flat[k] = orig - 1e-6
            down = float((e.forward(seqs)[0] * w).sum())
            flat[k] = orig
            assert g.reshape(-1)[k] == pytest.approx((up - down) / 2e-6, rel=1e-5, abs=1e-8)


def toy_model(seed=0, n=4, lookback=4, hidden=3, **kw):
    s = seasonal_ar_series(n, 200, seed=seed)
    sp = make_windows(s, lookback, 1)
    return forecaster_for(s, sp, hidden=hidden, seed=seed, activation="tanh", **kw), sp


def test_composite_gradient_check():
    model, sp = toy_model()
    x, y = sp.train.x[:6], sp.train.y[:6]
    _, g = model.loss_and_grad(x, y)
    fd = hnn.finite_diff_grad(model, x, y)
    a = np.concatenate([v.ravel() for v in g])
    b = fd.flat()
    assert np.max(np.abs(a - b)) / np.max(np.abs(b)) < 1e-4


def test_zero_projection_outputs_readout_bias():
    model, sp = toy_model()
    model.proj[:] = 0.0
    unit = model.unit
    for w in unit.weights[1:]:
        w[:] = 0.0
    unit.readout_bias[:] = np.arange(4.0)
    # every neuron sits at tanh(0) = 0, so only the readout bias is left
    np.testing.assert_array_equal(model.predict(sp.test.x[:3]), np.tile(np.arange(4.0), (3, 1)))


def test_aggregator_matches_masked_oracle():
    model, sp = toy_model(n=5)
    s, _, _ = model._encode(sp.test.x[:5])
    np.testing.assert_array_equal(model.predict(sp.test.x[:5]),
                                  masked_dense_forward(model.unit, s))
    assert model.predict(sp.test.x[:8]).shape == (8, 5)


def test_single_window_helper():
    model, sp = toy_model()
    one = lstm_hnn_forward(model.encoder, model.unit, model.proj, sp.test.x[0],
                           float(model.proj_bias[0]))
    np.testing.assert_array_equal(one, model.predict(sp.test.x[:1])[0])


def test_encoding_is_permutation_equivariant():
    model, sp = toy_model()
    x = sp.test.x[:3]
    perm = np.array([2, 0, 3, 1])
    s, _, _ = model._encode(x)
    sp_, _, _ = model._encode(x[:, :, perm])
    np.testing.assert_allclose(sp_, s[:, perm], rtol=1e-14)


def test_wrong_series_count():
    model, sp = toy_model()
    with pytest.raises(ValueError, match="series"):
        model.predict(np.zeros((1, 4, 5)))


def test_training_beats_mean_and_is_deterministic(tmp_path):
    s = seasonal_ar_series(4, 600, seed=1)
    sp = make_windows(s, 12, 3)
    cfg = hnn.TrainConfig(lr=5e-3, max_epochs=8, patience=8, seed=0)
    results = []
    for _ in range(2):
        m = forecaster_for(s, sp, hidden=8, seed=0)
        m, hist = train_forecaster(m, sp, cfg)
        results.append((hist, predict_split(m, sp)[1]))
    assert results[0][0] == results[1][0]
    np.testing.assert_array_equal(results[0][1], results[1][1])
    assert min(h["valid_loss"] for h in results[0][0]) < 1.0
    path = tmp_path / "f.json"
    save_forecaster(path, m, cfg, sp, {"split": "0.6,0.2,0.2"})
    back, doc = load_forecaster(path)
    np.testing.assert_array_equal(back.predict(sp.test.x), m.predict(sp.test.x))
    out = tmp_path / "f.csv"
    write_forecasts(out, sp.test.target_index, results[0][1], s.names)
    lines = out.read_text().splitlines()
    assert lines[0] == "timestamp,series,prediction"
    assert len(lines) == 1 + 4 * len(sp.test)


@settings(max_examples=10, deadline=None)
@given(st.integers(60, 400), st.integers(1, 20), st.integers(1, 24))
def test_window_invariants(length, lookback, horizon):
    s = ramp(length, 2)
    if length < lookback + horizon + 10:
        with pytest.raises(ValueError):
            make_windows(s, lookback, horizon)
        return
    sp = make_windows(s, lookback, horizon)
    assert sp.n_samples == length - lookback - horizon + 1
    parts = [sp.train, sp.valid, sp.test]
    for a, b in zip(parts, parts[1:]):
        if len(a) and len(b):
            assert a.target_index.max() < b.window_start.min()
    for ws in parts:
        np.testing.assert_array_equal(ws.target_index, ws.window_start + lookback - 1 + horizon)
