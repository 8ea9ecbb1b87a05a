"""Dataset ingestion, standardization and similarity estimation.

The similarity matrix produced here is what the graph-generation step
filters into a TMFG.
"""
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

VARIANTS = ("signed", "absolute")


class DataError(ValueError):
    """Raised on malformed or degenerate input data."""


@dataclass(frozen=True)
class Dataset:
    """Column-oriented numeric table.

    ``values`` has shape (n_rows, n_features); ``names`` labels the columns.
    """

    names: tuple
    values: np.ndarray
    target: Optional[np.ndarray] = None
    target_name: Optional[str] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("values must be a 2-d array")
        if len(self.names) != values.shape[1]:
            raise DataError("one name per column required")
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite values in dataset")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if self.target is not None:
            target = np.asarray(self.target, dtype=float).ravel()
            if target.shape[0] != values.shape[0]:
                raise DataError("target length differs from row count")
            if not np.all(np.isfinite(target)):
                raise DataError("non-finite values in target")
            object.__setattr__(self, "target", target)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def take_rows(self, idx) -> "Dataset":
        target = None if self.target is None else self.target[idx]
        return Dataset(self.names, self.values[idx], target, self.target_name)


@dataclass(frozen=True)
class NormalizationStats:
    names: tuple
    mean: np.ndarray
    std: np.ndarray
    dropped: tuple = field(default=())

    def apply(self, ds: Dataset) -> Dataset:
        """Standardize ``ds`` with these stats (columns matched by name)."""
        idx = [ds.names.index(n) for n in self.names]
        values = (ds.values[:, idx] - self.mean) / self.std
        return Dataset(self.names, values, ds.target, ds.target_name)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(),
                "std": self.std.tolist(), "dropped": list(self.dropped)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(tuple(d["names"]), np.asarray(d["mean"], float),
                   np.asarray(d["std"], float), tuple(d.get("dropped", ())))


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    labels: tuple = ()
    variant: str = "absolute"

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def to_json(self) -> str:
        labels = list(self.labels) or [str(i) for i in range(self.dim)]
        return json.dumps({"dim": self.dim, "labels": labels,
                           "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "SimilarityMatrix":
        d = json.loads(text)
        values = np.asarray(d["values"], dtype=float)
        if values.shape != (d["dim"], d["dim"]):
            raise DataError("values shape does not match dim")
        return cls(values, tuple(d.get("labels", ())))


def load_csv(path, has_header: bool = True,
             target_column: Optional[str] = None) -> Dataset:
    """Read a numeric CSV file into a :class:`Dataset`.

    Rows and columns in error messages are 1-based and count the header
    line, so they match what a text editor shows.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    if has_header:
        names, body, offset = [c.strip() for c in rows[0]], rows[1:], 2
    else:
        names = [f"x{i + 1}" for i in range(len(rows[0]))]
        body, offset = rows, 1
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(names)
    values = np.empty((len(body), width))
    for i, row in enumerate(body):
        if len(row) != width:
            raise DataError(f"{path}: row {i + offset} has {len(row)} fields, "
                            f"expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: cannot parse {cell!r} at row "
                                f"{i + offset}, column {names[j]!r}") from None
            if not np.isfinite(v):
                raise DataError(f"{path}: non-finite value at row {i + offset}, "
                                f"column {names[j]!r}")
            values[i, j] = v
    target = None
    if target_column is not None:
        if target_column not in names:
            raise DataError(f"{path}: target column {target_column!r} not found")
        t = names.index(target_column)
        target = values[:, t]
        values = np.delete(values, t, axis=1)
        names = names[:t] + names[t + 1:]
    return Dataset(tuple(names), values, target, target_column)


def zscore(ds: Dataset) -> tuple:
    """Standardize every column to mean 0 and (population) std 1.

    Constant columns are dropped with a warning. Returns the reduced
    dataset together with the :class:`NormalizationStats` used.
    """
    mean = ds.values.mean(axis=0)
    std = ds.values.std(axis=0)
    keep = std > 0
    if not keep.any():
        raise DataError("all columns are constant")
    dropped = tuple(n for n, k in zip(ds.names, keep) if not k)
    if dropped:
        logger.warning("dropping constant columns: %s", ", ".join(dropped))
    names = tuple(n for n, k in zip(ds.names, keep) if k)
    stats = NormalizationStats(names, mean[keep], std[keep], dropped)
    return stats.apply(ds), stats


def pearson_similarity(ds, variant: str = "absolute") -> SimilarityMatrix:
    """Pairwise Pearson correlation of the columns of ``ds``.

    ``ds`` may be a :class:`Dataset` or a plain (n_rows, p) array. Under
    ``variant="absolute"`` the magnitudes are returned.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if isinstance(ds, Dataset):
        x, labels = ds.values, ds.names
    else:
        x = np.asarray(ds, dtype=float)
        labels = tuple(str(i) for i in range(x.shape[1]))
    if x.shape[0] < 3:
        raise DataError("at least 3 rows are needed for correlations")
    xc = x - x.mean(axis=0)
    norms = np.sqrt((xc * xc).sum(axis=0))
    if np.any(norms == 0):
        bad = [labels[i] for i in np.flatnonzero(norms == 0)]
        raise DataError(f"constant columns: {', '.join(bad)}")
    xn = xc / norms
    c = xn.T @ xn
    c = np.clip((c + c.T) / 2, -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    if variant == "absolute":
        c = np.abs(c)
    return SimilarityMatrix(c, tuple(labels), variant)


def check_similarity(w: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("similarity matrix must be square")
    if not np.all(np.isfinite(w)):
        raise ValueError("similarity matrix has non-finite entries")
    if not np.allclose(w, w.T, rtol=0, atol=atol):
        raise ValueError("similarity matrix is not symmetric")
    return w


def names_or_default(names: Optional[Sequence[str]], p: int) -> tuple:
    return tuple(names) if names else tuple(str(i) for i in range(p))
