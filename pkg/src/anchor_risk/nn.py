"""Dense ReLU networks with anchored inputs, manual backprop and Adam.

Everything is float64 numpy. A network maps a batch of anchored tuples
``[r, x - r]`` (shape ``(n, 2 * d)``) to predictions of shape ``(n, out)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(
            f"non-finite training loss {loss!r} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = (128, 128, 128, 128)
    output_dim: int = 1
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be >= 1, got {self.hidden_dims}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_dims, self.output_dim]

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    loss: str = "mae"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # learning rate decays geometrically to learning_rate * lr_decay by the last epoch
    lr_decay: float = 1.0

    def __post_init__(self):
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.loss not in ("mae", "mse"):
            raise ValueError(f"loss must be 'mae' or 'mse', got {self.loss!r}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "loss": self.loss,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "seed": self.seed,
            "lr_decay": self.lr_decay,
        }


@dataclass
class Mlp:
    """A dense ReLU network. ``weights[i]`` has shape ``(fan_in, fan_out)``."""

    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        dims = self.spec.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("number of layers does not match spec")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(
                    f"layer {i}: expected weight {(dims[i], dims[i + 1])} and bias "
                    f"{(dims[i + 1],)}, got {w.shape} and {b.shape}"
                )

    @classmethod
    def init(cls, spec: MlpSpec) -> "Mlp":
        """Uniform He-style fan-in initialization, seeded by ``spec.seed``."""
        rng = np.random.default_rng(spec.seed)
        dims = spec.layer_dims
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(spec, weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Mlp":
        return Mlp(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.loss_history),
        )

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"expected input with {self.spec.input_dim} columns, got shape {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise ValueError("input contains NaN or Inf")
        return X

    def _forward_cache(self, X: np.ndarray) -> list[np.ndarray]:
        # activations[0] is the input, activations[i] the post-ReLU output of layer i
        acts = [X]
        h = X
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def forward(self, X) -> np.ndarray:
        """Predictions of shape ``(n, output_dim)``."""
        return self._forward_cache(self._check_input(X))[-1]

    def backward(self, X, upstream, *, params: bool = True):
        """Vector-Jacobian products through the network.

        Parameters
        ----------
        X : array of shape (n, input_dim)
        upstream : array of shape (n, output_dim)
            Gradient of a scalar loss with respect to the predictions.
        params : bool
            Also return gradients for the weights and biases.

        Returns
        -------
        grad_input : ndarray of shape (n, input_dim)
        grad_weights, grad_biases : lists of ndarrays (only when ``params``)
        """
        X = self._check_input(X)
        acts = self._forward_cache(X)
        g = np.asarray(upstream, dtype=np.float64).reshape(acts[-1].shape)
        gw = [None] * self.n_layers
        gb = [None] * self.n_layers
        for i in range(self.n_layers - 1, -1, -1):
            if i != self.n_layers - 1:
                g = g * (acts[i + 1] > 0.0)
            if params:
                gw[i] = acts[i].T @ g
                gb[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        if params:
            return g, gw, gb
        return g

    def grad_input(self, X, upstream) -> np.ndarray:
        return self.backward(X, upstream, params=False)


def make_anchored_tuple(x, r) -> np.ndarray:
    """Concatenate anchor ``r`` with residual ``x - r`` along the feature axis.

    Works on single vectors or on row-aligned batches.
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if x.shape != r.shape:
        raise ValueError(f"query shape {x.shape} does not match anchor shape {r.shape}")
    return np.concatenate([r, x - r], axis=-1)


def forward(model: Mlp, tuples) -> np.ndarray:
    return model.forward(tuples)


def grad_input(model: Mlp, tuples, upstream) -> np.ndarray:
    return model.grad_input(tuples, upstream)


def _loss_and_grad(pred: np.ndarray, y: np.ndarray, kind: str):
    diff = pred - y
    if kind == "mae":
        return np.abs(diff).mean(), np.sign(diff) / diff.size
    # overflow surfaces as a non-finite loss, which the caller reports
    with np.errstate(over="ignore", invalid="ignore"):
        return (diff**2).mean(), 2.0 * diff / diff.size


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1: float, beta2: float, eps: float):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def fit_anchored(model: Mlp, X, targets, cfg: TrainConfig) -> Mlp:
    """Train ``model`` in place on anchored tuples built from ``X``.

    Each epoch shuffles the samples and draws one fresh anchor per sample,
    uniformly over ``X``. ``targets`` has shape ``(n, output_dim)``.
    """
    X = np.asarray(X, dtype=np.float64)
    T = np.asarray(targets, dtype=np.float64)
    if T.ndim == 1:
        T = T[:, None]
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if model.spec.input_dim != 2 * d:
        raise ValueError(f"model expects {model.spec.input_dim} inputs, need 2*d = {2 * d}")
    if T.shape != (n, model.spec.output_dim):
        raise ValueError(f"targets shape {T.shape} does not match ({n}, {model.spec.output_dim})")

    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.weights + model.biases, cfg.learning_rate,
               cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    L = model.n_layers
    gamma = cfg.lr_decay ** (1.0 / max(cfg.epochs - 1, 1))
    for epoch in range(cfg.epochs):
        opt.lr = cfg.learning_rate * gamma**epoch
        order = rng.permutation(n)
        anchors = rng.integers(0, n, size=n)
        tuples = make_anchored_tuple(X[order], X[anchors])
        tgt = T[order]
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            xb = tuples[start:start + cfg.batch_size]
            yb = tgt[start:start + cfg.batch_size]
            acts = model._forward_cache(xb)
            loss, g = _loss_and_grad(acts[-1], yb, cfg.loss)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, b, loss)
            gw, gb = [None] * L, [None] * L
            for i in range(L - 1, -1, -1):
                if i != L - 1:
                    g = g * (acts[i + 1] > 0.0)
                gw[i] = acts[i].T @ g
                gb[i] = g.sum(axis=0)
                if i:
                    g = g @ model.weights[i].T
            opt.step(gw + gb)
            total += loss * xb.shape[0]
        model.loss_history.append(float(total / n))
        if epoch % 500 == 0:
            logger.debug("epoch %d loss %.6g", epoch, model.loss_history[-1])
    return model


def train_anchored(X, y, spec: MlpSpec, cfg: TrainConfig) -> Mlp:
    """Initialize a network from ``spec`` and train it to map ``[r, x - r]`` to ``y``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if spec.input_dim != 2 * X.shape[1]:
        raise ValueError(f"spec.input_dim={spec.input_dim} but features have d={X.shape[1]}")
    return fit_anchored(Mlp.init(spec), X, y, cfg)
