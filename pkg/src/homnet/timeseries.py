"""LSTM-HNN forecasting of multivariate series.

Every series is encoded by one shared LSTM, each final hidden state is
squeezed to a scalar by a shared linear projection, and the resulting
vector is aggregated by an HNN unit whose readout has one linear head per
series.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import hnn
from .bench import rse
from .corr import pearson_similarity
from .homology import HasseDiagram, hasse_from_graph
from .tmfg import tmfg_construct

logger = logging.getLogger(__name__)

HORIZONS = (3, 6, 12, 24)


@dataclass(frozen=True)
class MultivariateSeries:
    """``values`` has one row per time step and one column per series."""

    values: np.ndarray
    names: tuple = ()
    sample_rate: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("series values must be 2-d (time, series)")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite values in series")
        object.__setattr__(self, "values", v)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"s{i}" for i in range(v.shape[1])))

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_series(self) -> int:
        return self.values.shape[1]


def load_series(path, sample_rate: str = "") -> MultivariateSeries:
    """Read a comma- or whitespace-delimited matrix, one row per time step.

    A first line that does not parse as numbers is taken as a header.
    """
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")

    def split(line):
        return [c.strip() for c in line.split(",")] if "," in line else line.split()

    names = ()
    try:
        [float(c) for c in split(lines[0])]
    except ValueError:
        names, lines = tuple(split(lines[0])), lines[1:]
    rows = []
    for i, line in enumerate(lines):
        try:
            rows.append([float(c) for c in split(line)])
        except ValueError:
            raise ValueError(f"{path}: unparseable line {i + 1 + bool(names)}") from None
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows")
    return MultivariateSeries(np.array(rows), names, sample_rate)


@dataclass
class WindowedSeries:
    """Lookback windows and horizon targets of one chronological split.

    ``x`` has shape (N, P, n_series), ``y`` shape (N, n_series); both are
    standardized with the train-split statistics. ``target_index`` and
    ``window_start`` are row indices into the original series.
    """

    x: np.ndarray
    y: np.ndarray
    target_index: np.ndarray
    window_start: np.ndarray
    lookback: int
    horizon: int

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class WindowSplits:
    train: WindowedSeries
    valid: WindowedSeries
    test: WindowedSeries
    mean: np.ndarray
    std: np.ndarray
    n_samples: int
    train_rows: int

    def denormalize(self, y) -> np.ndarray:
        return np.asarray(y) * self.std + self.mean


def window_starts(length: int, lookback: int, horizon: int) -> np.ndarray:
    n = length - lookback - horizon + 1
    return np.arange(max(n, 0))


def make_windows(s: MultivariateSeries, lookback: int, horizon: int,
                 split: Sequence[float] = (0.6, 0.2, 0.2)) -> WindowSplits:
    """Cut ``(window, target)`` samples and split them chronologically.

    Sample ``i`` covers rows ``i .. i + P - 1`` and targets row
    ``i + P - 1 + h``. Validation and test samples whose window would
    reach back into an earlier split's target rows are dropped, so no
    target leaks into a later window. Per-series z-scoring uses the rows
    up to the last training target only.
    """
    if lookback < 1 or horizon < 1:
        raise ValueError("lookback and horizon must be positive")
    if s.length < lookback + horizon + 10:
        raise ValueError(f"series of length {s.length} too short for "
                         f"lookback {lookback} and horizon {horizon}")
    if len(split) != 3 or abs(sum(split) - 1.0) > 1e-9 or min(split) < 0:
        raise ValueError("split must be three non-negative fractions summing to 1")
    starts = window_starts(s.length, lookback, horizon)
    n = len(starts)
    targets = starts + lookback - 1 + horizon
    n_train = int(round(n * split[0]))
    n_valid = int(round(n * split[1]))
    parts = [starts[:n_train], starts[n_train:n_train + n_valid], starts[n_train + n_valid:]]
    if len(parts[0]) == 0:
        raise ValueError("empty training split")
    train_rows = int(targets[n_train - 1]) + 1
    raw = s.values[:train_rows]
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    z = (s.values - mean) / std
    last_target = train_rows - 1
    out = []
    for k, idx in enumerate(parts):
        if k > 0:
            idx = idx[idx > last_target]
        tgt = idx + lookback - 1 + horizon
        if len(idx):
            last_target = max(last_target, int(tgt[-1]))
        win = z[idx[:, None] + np.arange(lookback)] if len(idx) else np.zeros((0, lookback, s.n_series))
        out.append(WindowedSeries(win, z[tgt], tgt, idx, lookback, horizon))
    return WindowSplits(*out, mean=mean, std=std, n_samples=n, train_rows=train_rows)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LstmEncoder:
    """Single-input LSTM shared by every series.

    Gate blocks in the stacked weights are ordered input, forget, cell,
    output.
    """

    def __init__(self, hidden: int, seed: int = 0, init: str = "uniform"):
        self.hidden = hidden
        rng = np.random.default_rng(seed)
        k = 1.0 / np.sqrt(hidden)
        if init == "zeros":
            draw = lambda *shape: np.zeros(shape)
        else:
            draw = lambda *shape: rng.uniform(-k, k, size=shape)
        self.w_in = draw(1, 4 * hidden)
        self.w_rec = draw(hidden, 4 * hidden)
        self.bias = draw(4 * hidden)

    def parameters(self) -> list:
        return [self.w_in, self.w_rec, self.bias]

    def forward(self, seqs: np.ndarray) -> tuple:
        """Run ``seqs`` of shape (N, P); returns final hidden (N, H) and
        the per-step cache for :meth:`backward`."""
        seqs = np.asarray(seqs, dtype=float)
        n, steps = seqs.shape
        H = self.hidden
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        cache = []
        for t in range(steps):
            z = seqs[:, t:t + 1] * self.w_in + h @ self.w_rec + self.bias
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            cache.append((seqs[:, t:t + 1], h, c, i, f, g, o, tc))
            h, c = o * tc, c_new
        return h, cache

    def backward(self, cache: list, d_h: np.ndarray) -> list:
        """Backpropagation through time from the final hidden state."""
        H = self.hidden
        g_in = np.zeros_like(self.w_in)
        g_rec = np.zeros_like(self.w_rec)
        g_b = np.zeros_like(self.bias)
        d_c = np.zeros_like(d_h)
        for x, h_prev, c_prev, i, f, g, o, tc in reversed(cache):
            d_o = d_h * tc
            d_c = d_c + d_h * o * (1.0 - tc * tc)
            d_i = d_c * g
            d_g = d_c * i
            d_f = d_c * c_prev
            dz = np.concatenate([d_i * i * (1 - i), d_f * f * (1 - f),
                                 d_g * (1 - g * g), d_o * o * (1 - o)], axis=1)
            g_in += x.T @ dz
            g_rec += h_prev.T @ dz
            g_b += dz.sum(axis=0)
            d_h = dz @ self.w_rec.T
            d_c = d_c * f
        return [g_in, g_rec, g_b]


def lstm_forward(e: LstmEncoder, window) -> np.ndarray:
    """Final hidden state for one series window of length P."""
    h, _ = e.forward(np.asarray(window, dtype=float).reshape(1, -1))
    return h[0]


class LstmHnn:
    """Shared LSTM encoder, scalar projection and HNN aggregator."""

    def __init__(self, encoder: LstmEncoder, unit: hnn.HnnModel,
                 proj: Optional[np.ndarray] = None, proj_bias: Optional[np.ndarray] = None,
                 seed: int = 0):
        self.encoder = encoder
        self.unit = unit
        if proj is None:
            rng = np.random.default_rng(seed + 7)
            proj = rng.uniform(-1, 1, encoder.hidden) / np.sqrt(encoder.hidden)
        self.proj = np.asarray(proj, dtype=float)
        self.proj_bias = np.zeros(1) if proj_bias is None else np.asarray(proj_bias, float).reshape(1)

    @property
    def n_series(self) -> int:
        return self.unit.width

    def parameters(self) -> list:
        return self.encoder.parameters() + [self.proj, self.proj_bias] + self.unit.parameters()

    def decayed(self) -> list:
        return [self.encoder.w_in, self.encoder.w_rec, self.proj] + hnn.l2_terms(self.unit)

    def get_params(self) -> list:
        return [p.copy() for p in self.parameters()]

    def set_params(self, values) -> None:
        for dst, src in zip(self.parameters(), values):
            dst[...] = src

    def _encode(self, windows):
        windows = np.asarray(windows, dtype=float)
        if windows.ndim == 2:
            windows = windows[None]
        b, steps, n = windows.shape
        if n != self.n_series:
            raise ValueError(f"expected {self.n_series} series, got {n}")
        seqs = windows.transpose(0, 2, 1).reshape(b * n, steps)
        h, cache = self.encoder.forward(seqs)
        s = (h @ self.proj + self.proj_bias[0]).reshape(b, n)
        return s, h, cache

    def predict(self, windows) -> np.ndarray:
        s, _, _ = self._encode(windows)
        return self.unit.predict(s)

    def loss_and_grad(self, windows, y) -> tuple:
        s, h, cache = self._encode(windows)
        pred, ucache = hnn.forward(self.unit, s)
        loss = hnn.mse_loss(pred, y)
        ug = hnn.backward(self.unit, ucache, hnn.mse_grad(pred, y))
        d_s = ug.inputs.reshape(-1)
        g_proj = h.T @ d_s
        g_pb = np.array([d_s.sum()])
        d_h = d_s[:, None] * self.proj[None, :]
        g_enc = self.encoder.backward(cache, d_h)
        return loss, g_enc + [g_proj, g_pb] + ug.params


def lstm_hnn_forward(e: LstmEncoder, m: hnn.HnnModel, proj, window,
                     proj_bias: float = 0.0) -> np.ndarray:
    """Forecast vector for one window of shape (P, n_series)."""
    return LstmHnn(e, m, proj, np.array([proj_bias])).predict(window)[0]


def series_graph(train_values: np.ndarray, variant: str = "absolute"):
    w = pearson_similarity(train_values, variant)
    g, _ = tmfg_construct(w.values)
    return g


def build_forecaster(diagram: HasseDiagram, hidden: int = 64, seed: int = 0,
                     activation: str = "relu", channels: int = 1,
                     residual: bool = True, dense: bool = False) -> LstmHnn:
    n = diagram.p
    unit = hnn.init_model(diagram, hnn.TrainConfig(seed=seed), activation=activation,
                          channels=channels, output_dim=n, residual=residual, dense=dense)
    return LstmHnn(LstmEncoder(hidden, seed), unit, seed=seed)


def forecaster_for(s: MultivariateSeries, splits: WindowSplits, **kw) -> LstmHnn:
    """Build the TMFG prior from the training rows and wrap it in a model."""
    g = series_graph(s.values[:splits.train_rows])
    return build_forecaster(hasse_from_graph(g), **kw)


def train_forecaster(model: LstmHnn, splits: WindowSplits,
                     cfg: Optional[hnn.TrainConfig] = None) -> tuple:
    """Joint training of encoder, projection and HNN; early stopping on
    validation RSE."""
    cfg = cfg or hnn.TrainConfig()
    tr, va = splits.train, splits.valid
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("training and validation splits must be non-empty")

    def step(idx):
        return model.loss_and_grad(tr.x[idx], tr.y[idx])

    def evaluate():
        return rse(va.y, model.predict(va.x))

    return hnn.fit(model, step, evaluate, len(tr), cfg)


def predict_split(model: LstmHnn, splits: WindowSplits, part: str = "test",
                  batch: int = 512) -> tuple:
    """De-normalized ``(y_true, y_pred)`` for one split."""
    ws = getattr(splits, part)
    preds = [model.predict(ws.x[i:i + batch]) for i in range(0, len(ws), batch)]
    pred = np.concatenate(preds) if preds else np.zeros_like(ws.y)
    return splits.denormalize(ws.y), splits.denormalize(pred)


def write_forecasts(path, target_index, y_pred, names) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "series", "prediction"])
        for t, row in zip(target_index, y_pred):
            for name, v in zip(names, row):
                w.writerow([int(t), name, repr(float(v))])


def save_forecaster(path, model: LstmHnn, cfg: Optional[hnn.TrainConfig],
                    splits: WindowSplits, extra: Optional[dict] = None) -> None:
    enc = model.encoder
    info = {
        "kind": "lstm_hnn",
        "hidden": enc.hidden,
        "encoder": [p.tolist() for p in enc.parameters()],
        "proj": model.proj.tolist(),
        "proj_bias": model.proj_bias.tolist(),
        "lookback": splits.train.lookback,
        "horizon": splits.train.horizon,
    }
    info.update(extra or {})
    norm = {"mean": splits.mean.tolist(), "std": splits.std.tolist()}
    hnn.save_checkpoint(path, model.unit, cfg, normalization=norm, extra=info)


def load_forecaster(path, diagram: Optional[HasseDiagram] = None) -> tuple:
    """Returns ``(model, checkpoint document)``."""
    unit, doc = hnn.load_checkpoint(path, diagram)
    info = doc["extra"]
    if info.get("kind") != "lstm_hnn":
        raise ValueError(f"{path} is not a forecaster checkpoint")
    enc = LstmEncoder(info["hidden"], init="zeros")
    for dst, src in zip(enc.parameters(), info["encoder"]):
        dst[...] = np.asarray(src, dtype=float)
    model = LstmHnn(enc, unit, np.asarray(info["proj"]), np.asarray(info["proj_bias"]))
    return model, doc
