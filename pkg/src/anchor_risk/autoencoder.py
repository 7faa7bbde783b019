"""Anchored autoencoder and the cyclical-consistency penalty built on it."""

from __future__ import annotations

import numpy as np

from .nn import Mlp, MlpSpec, TrainConfig, fit_anchored, make_anchored_tuple

DEFAULT_AE_HIDDEN = (64, 16, 64)


def autoencoder_spec(n_features: int, hidden_dims=DEFAULT_AE_HIDDEN, seed: int = 0) -> MlpSpec:
    """Encoder ``2d -> 64 -> 16`` and decoder ``16 -> 64 -> d`` as one ReLU stack."""
    return MlpSpec(2 * n_features, tuple(hidden_dims), n_features, seed=seed)


def train_autoencoder(X, spec: MlpSpec | None = None, cfg: TrainConfig | None = None) -> Mlp:
    """Train ``A([r, x - r]) ~ x`` with a fresh random anchor per sample per epoch."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty (n, d) array")
    spec = spec or autoencoder_spec(X.shape[1])
    if spec.output_dim != X.shape[1]:
        raise ValueError("autoencoder output_dim must equal the feature dimension")
    cfg = cfg or TrainConfig(loss="mse", learning_rate=1e-3, epochs=500)
    return fit_anchored(Mlp.init(spec), X, X, cfg)


def _as_batch(x, xbar):
    x = np.asarray(x, dtype=np.float64)
    xbar = np.asarray(xbar, dtype=np.float64)
    if x.shape != xbar.shape:
        raise ValueError(f"x shape {x.shape} does not match x_bar shape {xbar.shape}")
    single = x.ndim == 1
    return np.atleast_2d(x), np.atleast_2d(xbar), single


def cyc_consistency(A, x, xbar):
    """``||xbar - A([x, xbar - x])||_2 + ||x - A([xbar, x - xbar])||_2``.

    ``A`` is anything with a ``forward`` method mapping ``(n, 2d)`` tuples to
    ``(n, d)`` reconstructions. Accepts single vectors or row batches.
    """
    x2, xb2, single = _as_batch(x, xbar)
    fwd = A.forward(make_anchored_tuple(xb2, x2))
    bwd = A.forward(make_anchored_tuple(x2, xb2))
    val = np.linalg.norm(xb2 - fwd, axis=1) + np.linalg.norm(x2 - bwd, axis=1)
    return float(val[0]) if single else val


def cyc_consistency_grad(A, x, xbar):
    """Per-row value of :func:`cyc_consistency` and its gradient in ``xbar``.

    Where a norm is exactly zero its subgradient is taken as zero.
    """
    x2, xb2, _ = _as_batch(x, xbar)
    d = x2.shape[1]
    t_fwd = make_anchored_tuple(xb2, x2)   # [x, xbar - x]
    t_bwd = make_anchored_tuple(x2, xb2)   # [xbar, x - xbar]
    e1 = xb2 - A.forward(t_fwd)
    e2 = x2 - A.forward(t_bwd)
    n1 = np.linalg.norm(e1, axis=1, keepdims=True)
    n2 = np.linalg.norm(e2, axis=1, keepdims=True)
    u1 = np.divide(e1, n1, out=np.zeros_like(e1), where=n1 > 0)
    u2 = np.divide(e2, n2, out=np.zeros_like(e2), where=n2 > 0)
    # d/dxbar of t_fwd is [0, I]; of t_bwd is [I, -I]
    g1 = A.grad_input(t_fwd, u1)
    g2 = A.grad_input(t_bwd, u2)
    grad = u1 - g1[:, d:] - (g2[:, :d] - g2[:, d:])
    return (n1 + n2)[:, 0], grad
