"""Forward anchoring: predictive mean and spread across anchors, and sigma recalibration."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .nn import make_anchored_tuple


@dataclass(frozen=True)
class UqConfig:
    n_anchors: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_anchors < 2:
            raise ValueError("n_anchors must be >= 2 (sigma uses a K-1 divisor)")


def draw_anchor_indices(pool_size: int, k: int, seed: int) -> np.ndarray:
    """``k`` indices into a pool, without replacement unless the pool is smaller than ``k``."""
    if pool_size < 1:
        raise ValueError("anchor pool is empty")
    rng = np.random.default_rng(seed)
    return rng.choice(pool_size, size=k, replace=pool_size < k)


def anchored_predictions(model, X, anchors) -> np.ndarray:
    """Predictions ``F([r_k, x_i - r_k])`` with shape ``(n, K, output_dim)``."""
    X = np.asarray(X, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if anchors.ndim != 2 or anchors.shape[1] != X.shape[1]:
        raise ValueError(f"anchors shape {anchors.shape} incompatible with queries {X.shape}")
    n, k = X.shape[0], anchors.shape[0]
    q = np.repeat(X, k, axis=0)
    r = np.tile(anchors, (n, 1))
    return model.forward(make_anchored_tuple(q, r)).reshape(n, k, -1)


def forward_uncertainty(model, X, anchors):
    """Mean and sample standard deviation (K - 1 divisor) across anchors.

    Returns ``(mu, sigma)``, each of shape ``(n,)`` for scalar-output models
    and ``(n, output_dim)`` otherwise.
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    if anchors.shape[0] < 2:
        raise ValueError("need at least 2 anchors")
    preds = anchored_predictions(model, X, anchors)
    mu = preds.mean(axis=1)
    sigma = preds.std(axis=1, ddof=1)
    if mu.shape[1] == 1:
        return mu[:, 0], sigma[:, 0]
    return mu, sigma


def predict_with_uncertainty(model, X, pool, cfg: UqConfig):
    """Draw one shared anchor set from ``pool`` and apply :func:`forward_uncertainty`."""
    pool = np.asarray(pool, dtype=np.float64)
    idx = draw_anchor_indices(pool.shape[0], cfg.n_anchors, cfg.seed)
    return forward_uncertainty(model, X, pool[idx])


def calibrate_sigma(mu, sigma, y, coverage: float = 0.9) -> float:
    """Smallest multiplier ``c`` with ``|y - mu| <= c * sigma`` on at least
    ``ceil(coverage * (n + 1))`` calibration points.

    Points with ``sigma == 0`` count as covered only when their residual is 0.
    Returns ``inf`` when the calibration set is too small for the requested
    coverage.
    """
    mu, sigma, y = (np.asarray(a, dtype=np.float64).ravel() for a in (mu, sigma, y))
    if not (mu.shape == sigma.shape == y.shape) or mu.size == 0:
        raise ValueError("mu, sigma and y must be non-empty and aligned")
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must be in (0, 1)")
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    n = mu.size
    resid = np.abs(y - mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sigma > 0, resid / sigma, np.where(resid == 0, 0.0, np.inf))
    k = math.ceil(coverage * (n + 1) - 1e-9)
    if k > n:
        warnings.warn(f"{n} calibration points cannot certify coverage {coverage}", stacklevel=2)
        return math.inf
    return float(np.sort(ratio)[k - 1])
