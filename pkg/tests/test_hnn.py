import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homnet.graph import ChordalGraph
from homnet.hnn import (HnnModel, TrainConfig, TrainingDiverged, backward,
                        finite_diff_grad, forward, init_model, load_checkpoint,
                        loss_and_grad, mse_loss, param_count, save_checkpoint,
                        train, write_history)
from homnet.homology import hasse_from_graph

from conftest import random_tmfg


@pytest.fixture
def k4_diagram(k4):
    return hasse_from_graph(k4)


@pytest.fixture
def p10_diagram():
    return hasse_from_graph(random_tmfg(10, 0)[0])


def masked_dense_forward(m, x):
    """Oracle: every layer as a full matrix with zeros off the facet links,
    summed column by column in plain Python loops."""
    x = np.asarray(x, dtype=float)
    acts = [x[:, :, None]]
    for k in range(1, m.depth):
        n_prev, n_k = m.sizes[k - 1], m.sizes[k]
        c_in, c_out = m.layer_channels(k - 1), m.layer_channels(k)
        full = np.zeros((n_k, n_prev, c_in, c_out))
        for i in range(n_k):
            cols = range(n_prev) if m.is_dense(k) else m.links[k][i]
            for slot, j in enumerate(cols):
                full[i, j] = m.weights[k][i, slot]
        prev = acts[-1]
        z = np.zeros((len(x), n_k, c_out))
        for b in range(len(x)):
            for i in range(n_k):
                for d in range(c_out):
                    s = None
                    for j in range(n_prev):
                        for c in range(c_in):
                            if full[i, j, c, d] == 0.0 and s is not None:
                                continue
                            term = prev[b, j, c] * full[i, j, c, d]
                            if full[i, j, c, d] != 0.0:
                                s = term if s is None else s + term
                    z[b, i, d] = (0.0 if s is None else s) + m.biases[k][i, d]
        if m.activation == "relu":
            a = np.maximum(z, 0.0)
        elif m.activation == "tanh":
            a = np.tanh(z)
        else:
            a = z
        acts.append(a)
    out = np.broadcast_to(m.readout_bias, (len(x), m.output_dim))
    for a, r in zip(acts, m.readout):
        if r is not None:
            out = out + a.reshape(len(x), -1) @ r.reshape(-1, r.shape[-1])
    return out


def test_k4_parameter_count(k4_diagram):
    pc = param_count(k4_diagram)
    assert (pc.link_weights, pc.biases, pc.readout_weights, pc.readout_bias) == (28, 11, 15, 1)
    assert pc.total == 55
    assert pc.dense_weights == 52 > pc.link_weights


def test_p10_parameter_count(p10_diagram):
    pc = param_count(p10_diagram)
    assert pc.link_weights == 142 and pc.total == 259
    m = init_model(p10_diagram)
    assert sum(p.size for p in m.parameters()) == 259


def test_channels_scale_parameters(k4_diagram):
    m = init_model(k4_diagram, channels=3)
    # layer 1 sees single-channel inputs
    assert m.weights[1].shape == (6, 2, 1, 3)
    assert m.weights[2].shape == (4, 3, 3, 3)
    assert param_count(m).link_weights == 6 * 2 * 3 + 4 * 3 * 9 + 1 * 4 * 9


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        HnnModel([], [], [], [], [], np.zeros(1))


def test_init_is_deterministic(p10_diagram):
    a = init_model(p10_diagram, TrainConfig(seed=3))
    b = init_model(p10_diagram, TrainConfig(seed=3))
    c = init_model(p10_diagram, TrainConfig(seed=4))
    assert all(np.array_equal(u, v) for u, v in zip(a.parameters(), b.parameters()))
    assert not np.array_equal(a.weights[1], c.weights[1])


def test_zero_network_outputs_bias(p10_diagram):
    m = init_model(p10_diagram, TrainConfig(init="zeros"))
    m.readout_bias[:] = 0.75
    x = np.random.default_rng(0).normal(size=(5, 10))
    np.testing.assert_array_equal(m.predict(x), np.full((5, 1), 0.75))


@pytest.mark.parametrize("dense,residual,channels,act", [
    (False, True, 1, "relu"), (False, False, 1, "tanh"), (True, True, 1, "relu"),
    (False, True, 2, "tanh"), (True, False, 2, "identity")])
def test_forward_equals_masked_dense_oracle(k4_diagram, dense, residual, channels, act):
    m = init_model(k4_diagram, TrainConfig(seed=1), activation=act, channels=channels,
                   residual=residual, dense=dense)
    for b in m.biases[1:]:
        b[:] = np.random.default_rng(2).normal(size=b.shape)
    x = np.random.default_rng(5).normal(size=(6, 4))
    if dense:
        # BLAS reductions reorder the sums
        np.testing.assert_allclose(m.predict(x), masked_dense_forward(m, x), rtol=1e-12)
    else:
        np.testing.assert_array_equal(m.predict(x), masked_dense_forward(m, x))


def test_forward_equals_oracle_on_tmfg(p10_diagram):
    m = init_model(p10_diagram, TrainConfig(seed=7))
    x = np.random.default_rng(1).normal(size=(4, 10))
    np.testing.assert_array_equal(m.predict(x), masked_dense_forward(m, x))


def test_locality(p10_diagram):
    # a layer-1 neuron only moves when one of its two vertices moves
    m = init_model(p10_diagram, TrainConfig(seed=2), activation="tanh")
    x = np.random.default_rng(0).normal(size=(1, 10))
    _, base = forward(m, x)
    x2 = x.copy()
    x2[0, 0] += 1.0
    _, moved = forward(m, x2)
    changed = np.nonzero(np.abs(moved.acts[1] - base.acts[1]).ravel() > 0)[0]
    expected = [i for i, e in enumerate(p10_diagram.layers[1]) if 0 in e]
    assert changed.tolist() == expected


def test_readout_gradient_closed_form(k4_diagram):
    m = init_model(k4_diagram, TrainConfig(seed=0))
    x = np.random.default_rng(0).normal(size=(1, 4))
    y = np.array([[0.3]])
    pred, cache = forward(m, x)
    g = backward(m, cache, 2.0 * (pred - y))
    top = cache.acts[-1].reshape(-1)
    np.testing.assert_allclose(g.params[-2].reshape(-1), 2.0 * (pred[0, 0] - 0.3) * top,
                               rtol=1e-14)
    np.testing.assert_allclose(g.params[-1], 2.0 * (pred[0] - 0.3), rtol=1e-14)


@pytest.mark.parametrize("dense,residual,channels", [
    (False, True, 1), (False, False, 1), (True, True, 1), (True, False, 2), (False, True, 3)])
def test_gradients_match_finite_differences(p10_diagram, dense, residual, channels):
    m = init_model(p10_diagram, TrainConfig(seed=11), activation="tanh",
                   channels=channels, residual=residual, dense=dense)
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(5, 10)), rng.normal(size=(5, 1))
    _, g = loss_and_grad(m, x, y)
    fd = finite_diff_grad(m, x, y)
    a, b = g.flat(), fd.flat()
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-6


def test_input_gradient(k4_diagram):
    m = init_model(k4_diagram, TrainConfig(seed=5), activation="tanh")
    x = np.random.default_rng(0).normal(size=(2, 4))
    out, cache = forward(m, x)
    g = backward(m, cache, np.ones_like(out)).inputs
    eps = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = eps
        fd = (m.predict(x + e) - m.predict(x - e))[:, 0] / (2 * eps)
        np.testing.assert_allclose(g[:, j], fd, rtol=1e-6, atol=1e-9)


def test_finite_diff_needs_positive_eps(k4_diagram):
    m = init_model(k4_diagram)
    with pytest.raises(ValueError):
        finite_diff_grad(m, np.zeros((1, 4)), np.zeros((1, 1)), eps=0.0)


def test_bad_input_shape(k4_diagram):
    m = init_model(k4_diagram)
    with pytest.raises(ValueError, match="width"):
        m.predict(np.zeros((2, 5)))
    with pytest.raises(ValueError, match="non-finite"):
        m.predict(np.array([[0, 1, np.nan, 0]]))


def test_train_recovers_linear_target(k4_diagram):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(256, 4))
    xv = rng.normal(size=(64, 4))
    m = init_model(k4_diagram, TrainConfig(seed=0), activation="identity")
    cfg = TrainConfig(lr=1e-2, batch_size=32, max_epochs=500, patience=50, seed=0)
    m, hist = train(m, (x, x[:, 0]), (xv, xv[:, 0]), cfg)
    assert len(hist) <= 500
    assert mse_loss(m.predict(xv), xv[:, :1]) < 1e-6


def test_training_is_reproducible(k4_diagram, tmp_path):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(100, 4))
    y = np.sin(x).sum(axis=1)
    cfg = TrainConfig(lr=1e-2, max_epochs=15, seed=2)
    runs = []
    for name in ("a", "b"):
        m = init_model(k4_diagram, cfg)
        _, hist = train(m, (x[:80], y[:80]), (x[80:], y[80:]), cfg)
        write_history(hist, tmp_path / f"{name}.csv")
        runs.append((tmp_path / f"{name}.csv").read_bytes())
    assert runs[0] == runs[1]


def test_divergence_is_reported(k4_diagram):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(64, 4)) * 10
    m = init_model(k4_diagram, TrainConfig(seed=0), activation="identity")
    cfg = TrainConfig(lr=1e3, optimizer="sgd", max_epochs=50)
    with pytest.raises(TrainingDiverged) as info:
        train(m, (x, x.sum(axis=1)), (x, x.sum(axis=1)), cfg)
    assert info.value.epoch >= 1


def test_early_stopping_restores_best(k4_diagram):
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(40, 4)), rng.normal(size=40)
    xv, yv = rng.normal(size=(20, 4)), rng.normal(size=20)
    cfg = TrainConfig(lr=5e-2, max_epochs=100, patience=5)
    m, hist = train(init_model(k4_diagram, cfg), (x, y), (xv, yv), cfg)
    best = min(h["valid_loss"] for h in hist)
    assert mse_loss(m.predict(xv), yv) == pytest.approx(best, rel=1e-12)
    assert len(hist) < 100


def test_l2_shrinks_weights(k4_diagram):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(64, 4))
    y = x @ [1.0, -2.0, 0.5, 0.0]
    norms = []
    for l2 in (0.0, 0.1):
        cfg = TrainConfig(lr=1e-2, max_epochs=60, patience=60, l2=l2)
        m, _ = train(init_model(k4_diagram, cfg), (x, y), (x, y), cfg)
        norms.append(sum(float((w ** 2).sum()) for w in m.weights[1:]))
    assert norms[1] < norms[0]


def test_bad_config():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_checkpoint_roundtrip_and_hash_refusal(p10_diagram, k4_diagram, tmp_path):
    m = init_model(p10_diagram, TrainConfig(seed=4), channels=2)
    path = tmp_path / "m.json"
    save_checkpoint(path, m, TrainConfig(seed=4))
    back, doc = load_checkpoint(path)
    x = np.random.default_rng(0).normal(size=(3, 10))
    np.testing.assert_array_equal(back.predict(x), m.predict(x))
    load_checkpoint(path, p10_diagram)
    with pytest.raises(ValueError, match="different diagram"):
        load_checkpoint(path, k4_diagram)


def test_eight_vertex_census():
    g, _ = random_tmfg(8, 0)
    d = hasse_from_graph(g)
    assert d.sizes == [8, 18, 16, 5]
    pc = param_count(d)
    assert (pc.link_weights, pc.dense_weights) == (104, 512)


@settings(max_examples=15, deadline=None)
@given(st.integers(4, 12), st.integers(0, 1000), st.integers(1, 3))
def test_sparse_matches_oracle_property(p, seed, channels):
    d = hasse_from_graph(random_tmfg(p, seed)[0])
    m = init_model(d, TrainConfig(seed=seed), channels=channels, activation="tanh")
    x = np.random.default_rng(seed).normal(size=(2, p))
    np.testing.assert_array_equal(m.predict(x), masked_dense_forward(m, x))
    pc = param_count(m)
    assert pc.link_weights <= pc.dense_weights
