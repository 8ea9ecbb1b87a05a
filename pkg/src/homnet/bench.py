"""Metrics, baselines, significance tests and the tabular experiment harness."""
import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import hnn
from .corr import Dataset, pearson_similarity
from .homology import HasseDiagram, hasse_from_graph
from .tmfg import tmfg_construct

logger = logging.getLogger(__name__)

VARIANTS = ("hnn", "mlp_hnn", "mlp_res", "mlp")
# (p-value threshold, marker); 1%, 0.1% and 0.001%
SIGNIFICANCE = ((1e-5, "***"), (1e-3, "**"), (1e-2, "*"))
# small declared search space for run_tabular_experiment(grid=...)
DEFAULT_GRID = {"lr": (1e-3, 3e-3, 1e-2), "channels": (1, 2)}


class DegenerateInput(ValueError):
    pass


# -- metrics -----------------------------------------------------------------

def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    y = np.asarray(y_true, dtype=float).ravel()
    f = np.asarray(y_pred, dtype=float).ravel()
    if y.shape != f.shape or y.size < 2:
        raise ValueError("need two equal-length vectors of length >= 2")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise DegenerateInput("y_true is constant")
    return float(1.0 - np.sum((y - f) ** 2) / ss_tot)


def rse(y_true, y_pred) -> float:
    """Root relative squared error over the whole test tensor."""
    y = np.asarray(y_true, dtype=float)
    f = np.asarray(y_pred, dtype=float)
    if y.shape != f.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {f.shape}")
    den = np.sqrt(np.sum((y - y.mean()) ** 2))
    if den == 0:
        raise DegenerateInput("y_true is constant")
    return float(np.sqrt(np.sum((y - f) ** 2)) / den)


def corr_metric(y_true, y_pred) -> float:
    """Mean over series (columns) of the Pearson correlation between truth
    and forecast. Series with constant truth or forecast are skipped."""
    y = np.asarray(y_true, dtype=float)
    f = np.asarray(y_pred, dtype=float)
    if y.shape != f.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {f.shape}")
    if y.ndim == 1:
        y, f = y[:, None], f[:, None]
    yc = y - y.mean(axis=0)
    fc = f - f.mean(axis=0)
    sy = np.sqrt((yc ** 2).sum(axis=0))
    sf = np.sqrt((fc ** 2).sum(axis=0))
    ok = (sy > 0) & (sf > 0)
    if not ok.any():
        raise DegenerateInput("every series is constant")
    if not ok.all():
        logger.warning("skipping %d constant series in CORR", int((~ok).sum()))
    r = (yc[:, ok] * fc[:, ok]).sum(axis=0) / (sy[ok] * sf[ok])
    return float(np.mean(r))


def paired_t_test(a, b) -> tuple:
    """Two-sided paired t-test on ``a - b``.

    Returns ``(t, p)``. The p-value comes from the regularized incomplete
    beta function, accurate to well below 1e-8.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length 1-d samples of size >= 2")
    d = a - b
    n = d.size
    sd = d.std(ddof=1)
    # constant up to rounding counts as constant
    if sd <= 1e-12 * max(np.abs(d).max(), 1e-300):
        raise DegenerateInput("differences have zero variance")
    t = d.mean() / (sd / np.sqrt(n))
    dof = n - 1
    p = special.betainc(dof / 2.0, 0.5, dof / (dof + t * t))
    return float(t), float(p)


def significance_marker(p: float) -> str:
    for threshold, mark in SIGNIFICANCE:
        if p < threshold:
            return mark
    return ""


@dataclass
class MetricReport:
    """Summary of one model's scores across datasets or runs."""

    model: str
    scores: list
    mean: float = 0.0
    q10: float = 0.0
    q50: float = 0.0
    q90: float = 0.0
    marker: str = ""

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.size:
            self.mean = float(s.mean())
            self.q10, self.q50, self.q90 = (float(v) for v in np.quantile(s, [0.1, 0.5, 0.9]))

    def row(self) -> dict:
        return {"model": self.model, "mean": self.mean, "10th": self.q10,
                "50th": self.q50, "90th": self.q90, "marker": self.marker}


def summarize(scores: dict, reference: str = "hnn") -> list:
    """One :class:`MetricReport` per model. The reference model gets a
    significance marker from a paired t-test against the best other
    model, when the pairing is possible."""
    reports = [MetricReport(k, list(v)) for k, v in scores.items()]
    ref = next((r for r in reports if r.model == reference), None)
    others = [r for r in reports if r.model != reference]
    if ref is not None and others and len(ref.scores) >= 2:
        rival = max(others, key=lambda r: r.mean)
        try:
            _, p = paired_t_test(ref.scores, rival.scores)
            ref.marker = significance_marker(p)
        except (DegenerateInput, ValueError):
            pass
    return reports


def write_report(reports: list, csv_path=None, json_path=None) -> None:
    rows = [r.row() for r in reports]
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    if json_path:
        with open(json_path, "w") as fh:
            json.dump(rows, fh, indent=2)


# -- baselines ---------------------------------------------------------------

class LinearRegression:
    """Least squares through the normal equations.

    A singular Gram matrix falls back to a small ridge penalty (with a
    warning) unless ``ridge_fallback`` is off, in which case it raises.
    """

    def __init__(self, ridge_fallback: bool = True, ridge: float = 1e-8):
        self.ridge_fallback = ridge_fallback
        self.ridge = ridge
        self.coef_ = None
        self.intercept_ = 0.0
        self.used_ridge = False

    def fit(self, x, y) -> "LinearRegression":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xm, ym = x.mean(axis=0), y.mean(axis=0)
        xc, yc = x - xm, y - ym
        gram = xc.T @ xc
        rhs = xc.T @ yc
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            if not self.ridge_fallback:
                raise np.linalg.LinAlgError("singular design matrix")
            logger.warning("singular design matrix; using ridge %.1e", self.ridge)
            scale = max(np.trace(gram) / gram.shape[0], 1.0)
            gram = gram + self.ridge * scale * np.eye(gram.shape[0])
            self.used_ridge = True
        self.coef_ = np.linalg.solve(gram, rhs)
        self.intercept_ = ym - xm @ self.coef_
        return self

    def predict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.coef_ + self.intercept_


def persistence_forecast(windows) -> np.ndarray:
    """Forecast each series' next value as its last observed value."""
    return np.asarray(windows)[:, -1, :]


def baselines(kind: str, diagram: Optional[HasseDiagram] = None,
              cfg: Optional[hnn.TrainConfig] = None, **kw):
    """Factory for the reference models."""
    if kind == "linear_regression":
        return LinearRegression(**kw)
    if kind == "persistence":
        return persistence_forecast
    if kind == "dense_mlp":
        if diagram is None:
            raise ValueError("dense_mlp needs a diagram for its layer sizes")
        return AblationSpec("mlp").build(diagram, cfg, **kw)
    raise ValueError(f"unknown baseline {kind!r}")


# -- ablations ----------------------------------------------------------------

@dataclass(frozen=True)
class AblationSpec:
    """Which of the four architectures to build on a given diagram.

    ``hnn`` is sparse with residual readout, ``mlp_hnn`` keeps the sparse
    links but reads out from the last layer only, ``mlp_res`` is dense
    with residual readout and ``mlp`` is dense with last-layer readout.
    """

    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @property
    def dense(self) -> bool:
        return self.variant in ("mlp", "mlp_res")

    @property
    def residual(self) -> bool:
        return self.variant in ("hnn", "mlp_res")

    def build(self, diagram: HasseDiagram, cfg: Optional[hnn.TrainConfig] = None,
              **kw) -> hnn.HnnModel:
        return hnn.init_model(diagram, cfg, dense=self.dense, residual=self.residual, **kw)


# -- tabular harness -----------------------------------------------------------

@dataclass
class TabularRun:
    variant: str
    r2: float
    valid_loss: float
    params: int
    lr: float
    channels: int
    epochs: int


@dataclass
class TabularResult:
    runs: list
    graph_edges: int
    layer_sizes: list
    n_train: int
    n_test: int
    seed: int

    def r2(self) -> dict:
        return {r.variant: r.r2 for r in self.runs}

    def to_dict(self) -> dict:
        return asdict(self)


def split_indices(n: int, test_fraction: float, seed: int) -> tuple:
    order = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def prepare_tabular(ds: Dataset, test_fraction: float = 0.3, seed: int = 0,
                    variant: str = "absolute") -> dict:
    """Split, standardize on the training rows and build the prior graph."""
    if ds.target is None:
        raise ValueError("dataset has no target column")
    tr, te = split_indices(ds.n_rows, test_fraction, seed)
    x_tr, x_te = ds.values[tr], ds.values[te]
    mean, std = x_tr.mean(axis=0), x_tr.std(axis=0)
    keep = std > 0
    if not keep.all():
        logger.warning("dropping %d constant columns", int((~keep).sum()))
    x_tr = (x_tr[:, keep] - mean[keep]) / std[keep]
    x_te = (x_te[:, keep] - mean[keep]) / std[keep]
    y_tr, y_te = ds.target[tr], ds.target[te]
    ym, ys = y_tr.mean(), y_tr.std()
    ys = ys if ys > 0 else 1.0
    w = pearson_similarity(x_tr, variant)
    g, _ = tmfg_construct(w.values)
    return {
        "x_train": x_tr, "y_train": (y_tr - ym) / ys,
        "x_test": x_te, "y_test": y_te,
        "y_mean": ym, "y_std": ys, "graph": g, "diagram": hasse_from_graph(g),
        "names": [n for n, k in zip(ds.names, keep) if k],
        "x_mean": mean[keep], "x_std": std[keep],
    }


def run_tabular_experiment(ds: Dataset, variants: Sequence = VARIANTS,
                           cfg: Optional[hnn.TrainConfig] = None,
                           grid: Optional[dict] = None, test_fraction: float = 0.3,
                           valid_fraction: float = 0.15, activation: str = "relu",
                           seed: int = 0) -> TabularResult:
    """Train every variant on one 70/30 split and score it by test R2.

    ``grid`` optionally maps ``"lr"`` and ``"channels"`` to candidate
    values; the combination with the lowest validation loss is kept.
    Pass ``DEFAULT_GRID`` for the full (six-run) search per variant.
    """
    cfg = cfg or hnn.TrainConfig(seed=seed)
    prep = prepare_tabular(ds, test_fraction, seed)
    x, y = prep["x_train"], prep["y_train"]
    n_valid = max(1, int(round(len(x) * valid_fraction)))
    perm = np.random.default_rng(seed + 11).permutation(len(x))
    vi, ti = perm[:n_valid], perm[n_valid:]
    grid = grid or {}
    lrs = grid.get("lr", [cfg.lr])
    chans = grid.get("channels", [1])
    runs = []
    for v in variants:
        spec = v if isinstance(v, AblationSpec) else AblationSpec(v)
        best = None
        for lr in lrs:
            for ch in chans:
                c = hnn.TrainConfig(**{**asdict(cfg), "lr": lr})
                m = spec.build(prep["diagram"], c, activation=activation, channels=ch)
                m, hist = hnn.train(m, (x[ti], y[ti]), (x[vi], y[vi]), c)
                vl = min(h["valid_loss"] for h in hist)
                if best is None or vl < best[0]:
                    best = (vl, m, lr, ch, len(hist))
        vl, m, lr, ch, epochs = best
        pred = m.predict(prep["x_test"]).ravel() * prep["y_std"] + prep["y_mean"]
        runs.append(TabularRun(spec.variant, r2_score(prep["y_test"], pred), vl,
                               hnn.param_count(m).total, lr, ch, epochs))
        logger.info("%s: R2=%.4f (lr=%g, channels=%d, epochs=%d)",
                    spec.variant, runs[-1].r2, lr, ch, epochs)
    return TabularResult(runs, len(prep["graph"].edges), prep["diagram"].sizes,
                         len(x), len(prep["x_test"]), seed)


def tabular_table(results: Sequence[TabularResult]) -> list:
    """Aggregate several datasets into per-model quantile reports."""
    scores = {}
    for res in results:
        for run in res.runs:
            scores.setdefault(run.variant, []).append(run.r2)
    return summarize(scores)
