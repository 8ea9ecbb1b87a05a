"""Sparse homological unit compiled from a Hasse diagram.

Layer 0 holds the inputs (one per vertex); every neuron in layer ``k >= 1``
stands for a k-simplex and only sees the neurons of its ``k + 1`` facets.
All neurons, including the inputs, feed a linear readout through residual
connections.

The same engine also runs the dense ablations: a layer whose ``links``
entry is ``None`` is fully connected to the previous layer, and
``residual=False`` restricts the readout to the last layer.
"""
import copy
import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .homology import HasseDiagram, build_hasse

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh", "identity")
OPTIMIZERS = ("sgd", "adam")
INIT_SCHEMES = ("glorot", "zeros")
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass
class TrainConfig:
    lr: float = 1e-3
    optimizer: str = "adam"
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    init: str = "glorot"
    l2: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"init must be one of {INIT_SCHEMES}")
        if self.l2 < 0:
            raise ValueError("l2 penalty must be non-negative")


def activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def activate_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre: list  # pre[k], k >= 1: (B, n_k, c_k); pre[0] is None
    acts: list  # acts[k]: (B, n_k, c_k); acts[0] is the input
    outputs: np.ndarray
    model_id: int = 0


@dataclass
class Gradients:
    params: list
    inputs: Optional[np.ndarray] = None

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.params])


class HnnModel:
    """Layered sparse network with residual linear readout.

    Parameters are ``weights[k]`` of shape (n_k, fan_in, c_{k-1}, c_k),
    ``biases[k]`` of shape (n_k, c_k) for ``k >= 1``, ``readout[k]`` of
    shape (n_k, c_k, output_dim) for the layers feeding the readout and
    ``readout_bias`` of shape (output_dim,).
    """

    def __init__(self, sizes, links, weights, biases, readout, readout_bias,
                 activation="relu", channels=1, diagram=None):
        if not sizes or sum(sizes) == 0:
            raise ValueError("model needs at least one neuron")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.sizes = list(sizes)
        self.links = list(links)
        self.weights = list(weights)
        self.biases = list(biases)
        self.readout = list(readout)
        self.readout_bias = np.asarray(readout_bias, dtype=float)
        self.activation = activation
        self.channels = int(channels)
        self.diagram = diagram
        self._scatter = {}

    # -- structure ---------------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self.sizes)

    @property
    def width(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.readout_bias.shape[0]

    @property
    def residual(self) -> bool:
        return all(r is not None for r in self.readout)

    def layer_channels(self, k: int) -> int:
        return 1 if k == 0 else self.channels

    def is_dense(self, k: int) -> bool:
        return self.links[k] is None

    def parameters(self) -> list:
        """Parameter arrays (live references) in a fixed order."""
        out = []
        for k in range(1, self.depth):
            out += [self.weights[k], self.biases[k]]
        out += [r for r in self.readout if r is not None]
        out.append(self.readout_bias)
        return out

    def get_params(self) -> list:
        return [p.copy() for p in self.parameters()]

    def set_params(self, values) -> None:
        for dst, src in zip(self.parameters(), values):
            dst[...] = src

    def copy(self) -> "HnnModel":
        return copy.deepcopy(self)

    def predict(self, x) -> np.ndarray:
        return forward(self, x)[0]

    def _scatter_matrix(self, k: int) -> np.ndarray:
        # one-hot (n_k * fan_in, n_{k-1}) map from link slots to facet neurons
        if k not in self._scatter:
            links = self.links[k]
            m = np.zeros((links.size, self.sizes[k - 1]))
            m[np.arange(links.size), links.ravel()] = 1.0
            self._scatter[k] = m
        return self._scatter[k]

    def __deepcopy__(self, memo):
        new = HnnModel.__new__(HnnModel)
        new.__dict__.update(self.__dict__)
        for name in ("weights", "biases", "readout"):
            setattr(new, name, [None if a is None else a.copy()
                                for a in getattr(self, name)])
        new.readout_bias = self.readout_bias.copy()
        new._scatter = {}
        return new


def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-1.0, 1.0, size=shape) * limit


def init_model(d: HasseDiagram, cfg: Optional[TrainConfig] = None,
               activation: str = "relu", channels: int = 1,
               output_dim: int = 1, residual: bool = True,
               dense: bool = False) -> HnnModel:
    """Allocate and initialize a network shaped by ``d``.

    ``dense=True`` keeps the layer sizes but connects consecutive layers
    fully (the MLP ablations). Initialization is Glorot-uniform per
    neuron with fans counted over the actual links; biases start at zero.
    """
    cfg = cfg or TrainConfig()
    if channels < 1:
        raise ValueError("channels must be >= 1")
    if d.depth == 0 or d.n_nodes == 0:
        raise ValueError("empty diagram")
    rng = np.random.default_rng(cfg.seed)
    sizes = d.sizes
    depth = len(sizes)
    links = [None] + [None if dense else d.down_links[k] for k in range(1, depth)]
    ch = [1] + [channels] * (depth - 1)

    # outgoing connection count per neuron, used as its fan-out
    fan_out = []
    for k in range(depth):
        if k + 1 < depth:
            if dense:
                nxt = np.full(sizes[k], sizes[k + 1])
            else:
                nxt = np.array([len(u) for u in d.up_links[k]])
        else:
            nxt = np.zeros(sizes[k], dtype=int)
        fan_out.append(nxt * ch[min(k + 1, depth - 1)])

    weights, biases = [None], [None]
    for k in range(1, depth):
        fan = sizes[k - 1] if dense else k + 1
        shape = (sizes[k], fan, ch[k - 1], ch[k])
        if cfg.init == "zeros":
            w = np.zeros(shape)
        else:
            fi = fan * ch[k - 1]
            fo = np.maximum(fan_out[k], 1)
            w = np.stack([glorot(rng, shape[1:], fi, fo[i]) for i in range(sizes[k])])
        weights.append(w)
        biases.append(np.zeros((sizes[k], ch[k])))

    fed = range(depth) if residual else [depth - 1]
    n_in = sum(sizes[k] * ch[k] for k in fed)
    readout = []
    for k in range(depth):
        if k in fed:
            shape = (sizes[k], ch[k], output_dim)
            r = np.zeros(shape) if cfg.init == "zeros" else glorot(rng, shape, n_in, output_dim)
            readout.append(r)
        else:
            readout.append(None)
    return HnnModel(sizes, links, weights, biases, readout, np.zeros(output_dim),
                    activation=activation, channels=channels, diagram=d)


def forward(m: HnnModel, x) -> tuple:
    """Run the network on a batch ``x`` of shape (B, p).

    Returns ``(outputs, cache)`` with outputs of shape (B, output_dim).
    Sparse layers accumulate facet contributions in ascending facet order,
    one facet slot at a time, which makes the result bitwise equal to a
    dense zero-masked evaluation summed in column order.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != m.width:
        raise ValueError(f"expected inputs of width {m.width}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    acts = [x[:, :, None]]
    pre = [None]
    for k in range(1, m.depth):
        prev, w = acts[-1], m.weights[k]
        if m.is_dense(k):
            z = np.tensordot(prev, w, axes=([1, 2], [1, 2]))
        elif w.shape[2] == 1 and w.shape[3] == 1:
            z = prev[:, m.links[k][:, 0], 0] * w[:, 0, 0, 0]
            for j in range(1, w.shape[1]):
                z = z + prev[:, m.links[k][:, j], 0] * w[:, j, 0, 0]
            z = z[:, :, None]
        else:
            # one (slot, channel) term at a time, in column order
            z = None
            for j in range(w.shape[1]):
                for c in range(w.shape[2]):
                    term = prev[:, m.links[k][:, j], c][:, :, None] * w[:, j, c]
                    z = term if z is None else z + term
        # C order keeps the readout matmul layout-independent
        z = np.ascontiguousarray(z + m.biases[k])
        pre.append(z)
        acts.append(activate(z, m.activation))
    out = readout_forward(m, acts)
    return out, ForwardCache(x, pre, acts, out, id(m))


def readout_forward(m: HnnModel, acts: list) -> np.ndarray:
    out = np.broadcast_to(m.readout_bias, (acts[0].shape[0], m.output_dim))
    for a, r in zip(acts, m.readout):
        if r is not None:
            out = out + a.reshape(a.shape[0], -1) @ r.reshape(-1, r.shape[-1])
    return out


def backward(m: HnnModel, cache: ForwardCache, d_out) -> Gradients:
    """Reverse-mode gradients of ``sum(d_out * outputs)``.

    Returns gradients aligned with :meth:`HnnModel.parameters` plus the
    gradient with respect to the inputs.
    """
    if cache.model_id != id(m) or len(cache.acts) != m.depth:
        raise ValueError("cache was not produced by this model")
    d_out = np.asarray(d_out, dtype=float).reshape(cache.outputs.shape)
    batch = d_out.shape[0]
    d_acts, d_readout = [], []
    for a, r in zip(cache.acts, m.readout):
        if r is None:
            d_acts.append(np.zeros_like(a))
            continue
        flat = a.reshape(batch, -1)
        d_readout.append((flat.T @ d_out).reshape(r.shape))
        d_acts.append((d_out @ r.reshape(-1, r.shape[-1]).T).reshape(a.shape))
    d_w = [None] * m.depth
    d_b = [None] * m.depth
    for k in range(m.depth - 1, 0, -1):
        dz = d_acts[k] * activate_grad(cache.pre[k], cache.acts[k], m.activation)
        d_b[k] = dz.sum(axis=0)
        prev, w = cache.acts[k - 1], m.weights[k]
        if m.is_dense(k):
            d_w[k] = np.tensordot(dz, prev, axes=([0], [0])).transpose(0, 2, 3, 1)
            d_acts[k - 1] = d_acts[k - 1] + np.tensordot(dz, w, axes=([1, 2], [0, 3]))
        else:
            gathered = prev[:, m.links[k]]  # (B, n_k, fan, c_in)
            d_w[k] = np.einsum("bnjc,bnd->njcd", gathered, dz)
            d_slots = np.einsum("bnd,njcd->bnjc", dz, w)
            d_slots = d_slots.reshape(batch, -1, d_slots.shape[-1])
            scatter = m._scatter_matrix(k)
            d_prev = np.einsum("bmc,mp->bpc", d_slots, scatter)
            d_acts[k - 1] = d_acts[k - 1] + d_prev
    grads = []
    for k in range(1, m.depth):
        grads += [d_w[k], d_b[k]]
    grads += d_readout
    grads.append(d_out.sum(axis=0))
    return Gradients(grads, d_acts[0][:, :, 0])


def mse_loss(pred, y) -> float:
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float).reshape(pred.shape)
    return float(np.mean((pred - y) ** 2))


def mse_grad(pred, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(pred.shape)
    return 2.0 * (pred - y) / pred.size


def finite_diff_grad(m, x, y, loss: Callable = mse_loss, eps: float = 1e-5) -> Gradients:
    """Central-difference gradient of ``loss(m.predict(x), y)`` for every
    parameter of ``m`` (any object with ``parameters()`` and ``predict``)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    grads = []
    for p in m.parameters():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss(m.predict(x), y)
            flat[i] = orig - eps
            down = loss(m.predict(x), y)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads.append(g)
    return Gradients(grads)


def loss_and_grad(m: HnnModel, x, y) -> tuple:
    pred, cache = forward(m, x)
    return mse_loss(pred, y), backward(m, cache, mse_grad(pred, y))


class Optimizer:
    """Plain SGD or Adam over a list of parameter arrays (updated in place)."""

    def __init__(self, params: list, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        if cfg.optimizer == "adam":
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list) -> None:
        cfg = self.cfg
        self.t += 1
        if cfg.optimizer == "sgd":
            for p, g in zip(self.params, grads):
                p -= cfg.lr * g
            return
        b1, b2 = cfg.beta1, cfg.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + 1e-8)


def l2_terms(m) -> list:
    """Arrays subject to weight decay: link and readout weights."""
    if hasattr(m, "decayed"):
        return m.decayed()
    return [w for w in m.weights[1:]] + [r for r in m.readout if r is not None]


def fit(m, step_fn: Callable, eval_fn: Callable, n_train: int,
        cfg: TrainConfig) -> tuple:
    """Generic mini-batch loop with early stopping.

    ``step_fn(idx)`` returns ``(loss, grads)`` for the training rows
    ``idx``; ``eval_fn()`` returns the validation score (lower is better).
    The parameters of the best validation epoch are restored on exit.
    """
    rng = np.random.default_rng(cfg.seed + 1)
    params = m.parameters()
    opt = Optimizer(params, cfg)
    decayed = {id(a) for a in l2_terms(m)}
    best, best_params, stale = np.inf, m.get_params(), 0
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n_train)
            total = 0.0
            for start in range(0, n_train, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, grads = step_fn(idx)
                if not np.isfinite(loss):
                    raise TrainingDiverged(epoch, loss)
                if cfg.l2:
                    grads = [g + 2.0 * cfg.l2 * p if id(p) in decayed else g
                             for p, g in zip(params, grads)]
                opt.step(grads)
                total += loss * len(idx)
            train_loss = total / n_train
            valid = eval_fn()
            if not (np.isfinite(train_loss) and np.isfinite(valid)):
                raise TrainingDiverged(epoch, train_loss if not np.isfinite(train_loss) else valid)
            history.append({"epoch": epoch, "train_loss": train_loss, "valid_loss": valid})
            if valid < best:
                best, best_params, stale = valid, m.get_params(), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    m.set_params(best_params)
    return m, history


def train(m: HnnModel, train_set, valid_set, cfg: Optional[TrainConfig] = None) -> tuple:
    """Minimize mean squared error by mini-batch gradient descent.

    ``train_set`` and ``valid_set`` are ``(x, y)`` pairs. Returns the
    model restored to its best validation epoch and the per-epoch history.
    """
    cfg = cfg or TrainConfig()
    x, y = (np.asarray(a, dtype=float) for a in train_set)
    xv, yv = (np.asarray(a, dtype=float) for a in valid_set)
    if len(x) == 0 or len(xv) == 0:
        raise ValueError("training and validation sets must be non-empty")
    y = y.reshape(len(y), -1)
    yv = yv.reshape(len(yv), -1)
    if x.shape[1] != m.width or xv.shape[1] != m.width:
        raise ValueError("input width does not match the model")

    def step(idx):
        loss, g = loss_and_grad(m, x[idx], y[idx])
        return loss, g.params

    def evaluate():
        return mse_loss(m.predict(xv), yv)

    return fit(m, step, evaluate, len(x), cfg)


def write_history(history: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "valid_loss"])
        writer.writeheader()
        writer.writerows(history)


@dataclass
class ParameterBreakdown:
    link_weights: int
    biases: int
    readout_weights: int
    readout_bias: int
    total: int
    dense_weights: int
    dense_total: int


def param_count(m) -> ParameterBreakdown:
    """Parameter census of a model (or of the default width-1 model of a
    :class:`HasseDiagram`), with the dense MLP of equal layer sizes for
    comparison."""
    if isinstance(m, HasseDiagram):
        if m.depth == 0 or m.n_nodes == 0:
            raise ValueError("empty diagram")
        m = init_model(m, TrainConfig(init="zeros"))
    if not m.sizes or sum(m.sizes) == 0:
        raise ValueError("empty model")
    links = sum(int(w.size) for w in m.weights[1:])
    biases = sum(int(b.size) for b in m.biases[1:])
    readout = sum(int(r.size) for r in m.readout if r is not None)
    rb = int(m.readout_bias.size)
    ch = [m.layer_channels(k) for k in range(m.depth)]
    dense = sum(m.sizes[k - 1] * ch[k - 1] * m.sizes[k] * ch[k] for k in range(1, m.depth))
    return ParameterBreakdown(links, biases, readout, rb, links + biases + readout + rb,
                              dense, dense + biases + readout + rb)


# -- checkpoints -------------------------------------------------------------

def model_to_dict(m: HnnModel) -> dict:
    return {
        "sizes": m.sizes,
        "dense": [m.is_dense(k) for k in range(m.depth)],
        "activation": m.activation,
        "channels": m.channels,
        "residual": m.residual,
        "output_dim": m.output_dim,
        "params": [p.tolist() for p in m.parameters()],
    }


def model_from_dict(d: dict, diagram: HasseDiagram) -> HnnModel:
    m = init_model(diagram, TrainConfig(init="zeros"), activation=d["activation"],
                   channels=d["channels"], output_dim=d["output_dim"],
                   residual=d["residual"], dense=any(d["dense"][1:]))
    if m.sizes != d["sizes"]:
        raise ValueError("checkpoint layer sizes do not match the diagram")
    m.set_params([np.asarray(p, dtype=float) for p in d["params"]])
    return m


def save_checkpoint(path, m: HnnModel, cfg: Optional[TrainConfig] = None,
                    normalization: Optional[dict] = None, extra: Optional[dict] = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "diagram_hash": m.diagram.digest(),
        "diagram": m.diagram.to_dict()["layers"],
        "model": model_to_dict(m),
        "config": asdict(cfg) if cfg else None,
        "normalization": normalization,
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path, diagram: Optional[HasseDiagram] = None) -> tuple:
    """Load ``(model, document)``; refuses a diagram whose hash differs."""
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    stored = build_hasse([[tuple(s) for s in layer] for layer in doc["diagram"]])
    if stored.digest() != doc["diagram_hash"]:
        raise ValueError("checkpoint is corrupt: diagram hash mismatch")
    if diagram is not None and diagram.digest() != doc["diagram_hash"]:
        raise ValueError("checkpoint was trained on a different diagram")
    return model_from_dict(doc["model"], diagram or stored), doc
