"""Reverse-anchoring non-conformity scores.

In reverse anchoring the test sample plays the anchor and a training sample
the query, so the model must recover a *known* training target:
``F([x, r_k - x]) ~ y_k``. ``score1`` is the worst such discrepancy over an
anchor batch. ``score2`` instead measures how far ``x`` has to move before
those targets are matched, with an autoencoder penalty that keeps the moved
point near the data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autoencoder import cyc_consistency_grad
from .nn import make_anchored_tuple

logger = logging.getLogger(__name__)


@dataclass
class AnchorBatch:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64)
        self.y = y[:, None] if y.ndim == 1 else y
        if self.X.shape[0] == 0 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("anchor batch must be non-empty with aligned features and targets")

    def __len__(self):
        return self.X.shape[0]

    @classmethod
    def draw(cls, X, y, size: int = 100, seed: int = 0) -> "AnchorBatch":
        """Random subset of ``size`` training samples (all of them if fewer)."""
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        if n <= size:
            return cls(X, y)
        idx = np.random.default_rng(seed).choice(n, size=size, replace=False)
        return cls(X[idx], np.asarray(y)[idx])


@dataclass(frozen=True)
class Score2Config:
    eta: float = 0.01
    lam: float = 0.1
    n_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.lam < 0 or self.n_iter < 0:
            raise ValueError("lam and n_iter must be nonnegative")


def _reverse_tuples(X, anchors):
    # rows ordered sample-major: tuple (i, k) = [x_i, r_k - x_i]
    n, k = X.shape[0], anchors.shape[0]
    return make_anchored_tuple(np.tile(anchors, (n, 1)), np.repeat(X, k, axis=0))


def _check(X, batch):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != batch.X.shape[1]:
        raise ValueError(f"queries have {X.shape[1]} features, anchors have {batch.X.shape[1]}")
    return X, single


def score1(model, X, batch: AnchorBatch, chunk: int = 512):
    """``max_k ||y_k - F([x, r_k - x])||_1`` for each row of ``X``."""
    X, single = _check(X, batch)
    k = len(batch)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        xs = X[s:s + chunk]
        pred = model.forward(_reverse_tuples(xs, batch.X)).reshape(xs.shape[0], k, -1)
        out[s:s + chunk] = np.abs(batch.y[None] - pred).sum(axis=2).max(axis=1)
    return float(out[0]) if single else out


def _score2_objective(model, A, x, xbar, batch, lam):
    """Per-sample objective and its gradient in ``xbar``."""
    n, d = xbar.shape
    k = len(batch)
    tuples = _reverse_tuples(xbar, batch.X)
    resid = model.forward(tuples).reshape(n, k, -1) - batch.y[None]
    loss = np.abs(resid).sum(axis=2).mean(axis=1)
    g = model.grad_input(tuples, np.sign(resid).reshape(n * k, -1) / k)
    # d[xbar, r - xbar]/dxbar = [I, -I]
    grad = (g[:, :d] - g[:, d:]).reshape(n, k, d).sum(axis=1)
    if lam > 0 and A is not None:
        reg, greg = cyc_consistency_grad(A, x, xbar)
        loss = loss + lam * reg
        grad = grad + lam * greg
    return loss, grad


def score2(model, A, X, batch: AnchorBatch, cfg: Score2Config = Score2Config(), chunk: int = 256):
    """Input-space distance travelled by plain gradient descent on the
    anchor-batch mean L1 discrepancy plus ``lam`` times the cyclical-consistency
    penalty, starting from ``x``.

    Samples whose objective turns non-finite are reported as NaN.
    """
    X, single = _check(X, batch)
    if cfg.lam > 0 and A is None:
        raise ValueError("an autoencoder is required when lam > 0")
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        x = X[s:s + chunk]
        xbar = x.copy()
        alive = np.ones(x.shape[0], dtype=bool)
        for it in range(cfg.n_iter):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            loss, grad = _score2_objective(model, A, x[idx], xbar[idx], batch, cfg.lam)
            step = xbar[idx] - cfg.eta * grad
            bad = ~np.isfinite(loss) | ~np.all(np.isfinite(step), axis=1)
            if bad.any():
                for i in idx[bad]:
                    logger.warning("score2: non-finite objective for sample %d at iteration %d",
                                   s + i, it)
                alive[idx[bad]] = False
            xbar[idx[~bad]] = step[~bad]
        dist = np.linalg.norm(x - xbar, axis=1)
        dist[~alive] = np.nan
        out[s:s + chunk] = dist
    return float(out[0]) if single else out
