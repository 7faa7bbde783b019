"""Synthetic regression functions, CSV ingestion and target-percentile splits."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    """Feature matrix ``X`` (n, d) aligned with continuous targets ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray
    columns: list[str] | None = None
    provenance: str = ""
    stats: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.X.ndim != 2 or self.y.ndim != 1:
            raise ValueError("X must be (n, d) and y must be (n,)")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.X.shape[0]} feature rows but {self.y.shape[0]} targets")
        if self.X.shape[0] < 1:
            raise ValueError("dataset is empty")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains NaN or Inf")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, mask) -> "Dataset":
        return Dataset(self.X[mask], self.y[mask], self.columns, self.provenance, self.stats)


def _f1(X):
    x = X[:, 0]
    return np.where((x < 2.25) | (x > 3.01), x**2, x**2 - 20.0)


def _f2(X):
    return np.sin(2.0 * np.pi * X[:, 0])


def _f3(X, a=20.0, b=0.2, c=2.0 * np.pi):
    x = X[:, 0]
    return a * np.exp(-b * x) + np.exp(np.cos(c * x)) - a - math.exp(1.0)


def _f4(X):
    x = X[:, 0]
    return np.sin(x) * np.cos(5.0 * x) * np.cos(22.0 * x)


def _camel(X):
    # six-hump camel
    x1, x2 = X[:, 0], X[:, 1]
    return (4.0 - 2.1 * x1**2 + x1**4 / 3.0) * x1**2 + x1 * x2 + (-4.0 + 4.0 * x2**2) * x2**2


def _levy(X):
    w = 1.0 + (X - 1.0) / 4.0
    head = np.sin(np.pi * w[:, 0]) ** 2
    mid = np.sum((w[:, :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:, :-1] + 1.0) ** 2), axis=1)
    tail = (w[:, -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[:, -1]) ** 2)
    return head + mid + tail


# name -> (function, per-dimension (low, high) bounds)
FUNCTIONS = {
    "f1": (_f1, [(0.0, 5.0)]),
    "f2": (_f2, [(-0.5, 2.5)]),
    "f3": (_f3, [(-5.0, 5.0)]),
    "f4": (_f4, [(-1.0, 2.0)]),
    "camel": (_camel, [(-3.0, 3.0), (-2.0, 2.0)]),
    "levy": (_levy, [(-10.0, 10.0), (-10.0, 10.0)]),
}


def _lookup(name):
    try:
        return FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown function {name!r}; choose from {sorted(FUNCTIONS)}") from None


def evaluate_function(name: str, X) -> np.ndarray:
    """Closed-form targets of benchmark ``name`` at rows of ``X``."""
    fn, bounds = _lookup(name)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != len(bounds):
        raise ValueError(f"{name} takes {len(bounds)} features, got {X.shape[1]}")
    return fn(X)


def gen_function(name: str, n: int, domain=None, seed: int = 0) -> Dataset:
    """Sample ``n`` points uniformly on the function's domain.

    ``domain`` optionally overrides the bounds as a list of ``(low, high)``
    pairs, one per feature.
    """
    _, bounds = _lookup(name)
    if n < 1:
        raise ValueError("n must be >= 1")
    bounds = np.asarray(domain if domain is not None else bounds, dtype=np.float64)
    rng = np.random.default_rng(seed)
    X = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, len(bounds)))
    return Dataset(X, evaluate_function(name, X), provenance=f"{name}:uniform:n={n}:seed={seed}")


def make_eval_grid(name: str, m: int = 200) -> Dataset:
    """Evenly spaced points spanning the full domain, endpoints included.

    1D functions get exactly ``m`` points. For ``d > 1`` each axis gets
    ``round(m ** (1 / d))`` points, so the tensor grid has roughly ``m``.
    """
    _, bounds = _lookup(name)
    if m < 2:
        raise ValueError("m must be >= 2")
    per_axis = m if len(bounds) == 1 else max(2, round(m ** (1.0 / len(bounds))))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in bounds]
    X = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    return Dataset(X, evaluate_function(name, X), provenance=f"{name}:grid:m={m}")


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a training set out of a dataset by target percentile.

    ``gaps`` keeps targets at or below ``low`` and above ``high`` (defaults
    30 and 60); ``tails`` keeps targets at or below ``high`` (default 70);
    ``custom-interval`` keeps targets in any of ``intervals`` (``(lo, hi]``
    percentile pairs, the first one closed on the left).
    """

    mode: str = "gaps"
    low: float = 30.0
    high: float = 60.0
    intervals: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("gaps", "tails", "custom-interval"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        pts = [self.low, self.high] + [p for iv in self.intervals for p in iv]
        if any(not 0.0 <= p <= 100.0 for p in pts):
            raise ValueError("percentiles must lie in [0, 100]")
        if self.low > self.high or any(lo > hi for lo, hi in self.intervals):
            raise ValueError("percentile bounds must be ordered")

    @classmethod
    def tails(cls, high: float = 70.0, seed: int = 0) -> "SplitSpec":
        return cls(mode="tails", low=0.0, high=high, seed=seed)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "low": self.low, "high": self.high,
                "intervals": [list(iv) for iv in self.intervals], "seed": self.seed}


def train_mask(y, spec: SplitSpec) -> np.ndarray:
    """Boolean mask of samples exposed to training under ``spec``."""
    y = np.asarray(y, dtype=np.float64)
    if spec.mode == "gaps":
        lo, hi = np.percentile(y, [spec.low, spec.high])
        return (y <= lo) | (y > hi)
    if spec.mode == "tails":
        return y <= np.percentile(y, spec.high)
    mask = np.zeros(y.shape, dtype=bool)
    for a, b in spec.intervals:
        lo, hi = np.percentile(y, [a, b])
        mask |= ((y > lo) | (a == 0.0) & (y >= lo)) & (y <= hi)
    return mask


def split_targets(ds: Dataset, spec: SplitSpec, test: Dataset | None = None):
    """Return ``(train, test)``.

    The test set is ``test`` when given (e.g. an evaluation grid), otherwise
    the full ``ds`` so the held-out band appears in evaluation.
    """
    mask = train_mask(ds.y, spec)
    if not mask.any():
        raise ValueError(f"split {spec} leaves no training samples")
    train = ds.subset(mask)
    train.provenance = f"{ds.provenance}|{spec.mode}"
    return train, (test if test is not None else ds)


class CsvFormatError(ValueError):
    pass


def load_csv(path, target: str, standardize: bool = False, train_rows=None) -> Dataset:
    """Read a headered, comma-separated numeric table.

    Rows with empty cells are dropped (the count is logged and kept in
    ``stats["dropped_rows"]``). Any other non-numeric cell raises
    :class:`CsvFormatError` naming the line. With ``standardize`` the features
    are z-scored using the mean/std of ``train_rows`` only (a boolean mask or
    index array over the retained rows; default all rows).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        # lines starting with '#' carry provenance comments and are skipped
        lines = [(i, ln) for i, ln in enumerate(fh, start=1) if not ln.lstrip().startswith("#")]
    if not lines:
        raise CsvFormatError(f"{path}: empty file")
    parsed = zip((i for i, _ in lines), csv.reader(ln for _, ln in lines))
    _, header = next(parsed)
    header = [h.strip() for h in header]
    if target not in header:
        raise CsvFormatError(f"{path}: target column {target!r} not in header {header}")
    rows, dropped = [], 0
    for lineno, row in parsed:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        if any(c == "" or c.lower() in ("na", "nan") for c in cells):
            dropped += 1
            continue
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise CsvFormatError(f"{path}:{lineno}: non-numeric value {bad!r}") from None
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    if dropped:
        logger.warning("%s: dropped %d rows with missing values", path, dropped)
    data = np.array(rows)
    t = header.index(target)
    feat_cols = [h for i, h in enumerate(header) if i != t]
    X = np.delete(data, t, axis=1)
    stats = {"dropped_rows": dropped}
    if standardize:
        fit_rows = X if train_rows is None else X[np.asarray(train_rows)]
        mean, std = fit_rows.mean(axis=0), fit_rows.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        X = (X - mean) / std
        stats.update(mean=mean.tolist(), std=std.tolist())
    return Dataset(X, data[:, t], feat_cols, provenance=f"csv:{path.name}", stats=stats)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def write_csv(ds: Dataset, path, target: str = "y", comment: str | None = None) -> None:
    cols = ds.columns or [f"x{i}" for i in range(ds.n_features)]
    with Path(path).open("w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*cols, target])
        for xi, yi in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def write_manifest(path, **fields) -> None:
    Path(path).write_text(json.dumps(fields, indent=2, sort_keys=True) + "\n")
