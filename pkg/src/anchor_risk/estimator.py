"""scikit-learn compatible estimators around the anchored networks.

``AnchoredRegressor`` trains the anchored network and predicts a mean and an
anchor spread. ``AnchoredAutoencoder`` reconstructs features. ``RiskRegimeDetector``
combines a fitted regressor with a non-conformity score and sorts a batch of
test samples into the regimes ``ID``, ``low``, ``moderate`` and ``high``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import metrics as _metrics
from .autoencoder import autoencoder_spec
from .nn import Mlp, MlpSpec, TrainConfig, fit_anchored, make_anchored_tuple
from .nonconformity import AnchorBatch, Score2Config, score1, score2
from .regimes import assign_regimes, single_score_regimes
from .uncertainty import calibrate_sigma, draw_anchor_indices, forward_uncertainty


class _Standardizer:
    def __init__(self, X, enabled: bool):
        if enabled:
            self.mean = X.mean(axis=0)
            std = X.std(axis=0)
            self.scale = np.where(std > 0, std, 1.0)
        else:
            self.mean = np.zeros(X.shape[1])
            self.scale = np.ones(X.shape[1])

    def __call__(self, X):
        return (X - self.mean) / self.scale

    def to_dict(self):
        return {"mean": [repr(float(v)) for v in self.mean],
                "scale": [repr(float(v)) for v in self.scale]}

    @classmethod
    def from_dict(cls, doc):
        self = cls.__new__(cls)
        self.mean = np.array([float(v) for v in doc["mean"]])
        self.scale = np.array([float(v) for v in doc["scale"]])
        return self


def _train_config(est) -> TrainConfig:
    return TrainConfig(epochs=est.epochs, batch_size=est.batch_size,
                       learning_rate=est.learning_rate, loss=est.loss,
                       seed=est.random_state, lr_decay=est.lr_decay)


class AnchoredRegressor(RegressorMixin, BaseEstimator):
    """Regressor trained on anchored tuples ``[r, x - r]``.

    Parameters
    ----------
    hidden_dims : tuple of int
        Widths of the hidden ReLU layers.
    epochs, batch_size, learning_rate, lr_decay, loss
        Adam training schedule; ``lr_decay`` is the final-to-initial learning
        rate ratio (geometric decay across epochs).
    n_anchors : int
        Anchors used at prediction time for the mean and spread.
    standardize : bool
        Z-score features with training statistics before anchoring.
    random_state : int
        Seeds initialization, anchor sampling during training and the shared
        prediction anchors.
    """

    def __init__(self, hidden_dims=(128, 128, 128, 128), epochs=2000, batch_size=64,
                 learning_rate=3e-3, lr_decay=0.01, loss="mae", n_anchors=10,
                 standardize=True, random_state=0):
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.loss = loss
        self.n_anchors = n_anchors
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.scaler_ = _Standardizer(X, self.standardize)
        Z = self.scaler_(X)
        spec = MlpSpec(2 * X.shape[1], tuple(self.hidden_dims), 1, seed=self.random_state)
        self.model_ = fit_anchored(Mlp.init(spec), Z, y, _train_config(self))
        self.anchor_pool_ = Z
        self.y_train_ = y
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model: Mlp, anchor_pool, y_train, scaler=None, **params):
        """Wrap an already trained network (e.g. loaded from a checkpoint)."""
        self = cls(**params)
        pool = np.asarray(anchor_pool, dtype=np.float64)
        self.scaler_ = scaler or _Standardizer(pool, False)
        self.model_ = model
        self.anchor_pool_ = pool
        self.y_train_ = np.asarray(y_train, dtype=np.float64)
        self.n_features_in_ = pool.shape[1]
        return self

    def scale(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.scaler_(X)

    def anchors(self, pool=None) -> np.ndarray:
        """The shared prediction anchors (in scaled feature space)."""
        check_is_fitted(self, "model_")
        pool = self.anchor_pool_ if pool is None else pool
        return pool[draw_anchor_indices(pool.shape[0], self.n_anchors, self.random_state)]

    def predict(self, X, return_std=False):
        check_is_fitted(self, "model_")
        mu, sigma = forward_uncertainty(self.model_, self.scale(X), self.anchors())
        return (mu, sigma) if return_std else mu


class AnchoredAutoencoder(TransformerMixin, BaseEstimator):
    """Anchored autoencoder ``A([r, x - r]) ~ x``; ``transform`` self-anchors (``r = x``)."""

    def __init__(self, hidden_dims=(64, 16, 64), epochs=500, batch_size=64,
                 learning_rate=1e-3, lr_decay=0.1, loss="mse", random_state=0):
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.loss = loss
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        spec = autoencoder_spec(X.shape[1], self.hidden_dims, self.random_state)
        self.model_ = fit_anchored(Mlp.init(spec), X, X, _train_config(self))
        self.n_features_in_ = X.shape[1]
        return self

    def reconstruct(self, X, anchors=None) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        anchors = X if anchors is None else check_array(anchors, dtype=np.float64)
        return self.model_.forward(make_anchored_tuple(X, anchors))

    def transform(self, X):
        return self.reconstruct(X)


class RiskRegimeDetector(BaseEstimator):
    """Sort test samples into risk regimes from anchor spread and non-conformity.

    Regimes are assigned relative to the batch passed to :meth:`predict`:
    the quantile thresholds are computed on that batch, so no labelled
    calibration data is needed.

    Parameters
    ----------
    regressor : AnchoredRegressor or None
        Template regressor, cloned and fitted in :meth:`fit`. Use
        :meth:`from_fitted` to wrap one that is already trained.
    score : {"score1", "score2"}
        Non-conformity score. ``score2`` also trains an autoencoder.
    anchor_batch : int or None
        Training samples used as reverse anchors; ``None`` uses all of them.
    eta, lam, n_iter : float, float, int
        Step size, regularization weight and iteration count for ``score2``.
    mode : {"joint", "uq-only", "mnc-only"}
        ``joint`` uses both channels; the others are single-channel ablations.
    conditional : bool
        Compute non-conformity quantiles within each uncertainty bin.
    """

    def __init__(self, regressor=None, score="score1", anchor_batch=100, eta=0.01,
                 lam=0.1, n_iter=100, autoencoder=None, mode="joint", conditional=False,
                 random_state=0):
        self.regressor = regressor
        self.score = score
        self.anchor_batch = anchor_batch
        self.eta = eta
        self.lam = lam
        self.n_iter = n_iter
        self.autoencoder = autoencoder
        self.mode = mode
        self.conditional = conditional
        self.random_state = random_state

    def _validate_params(self):
        if self.score not in ("score1", "score2"):
            raise ValueError(f"score must be 'score1' or 'score2', got {self.score!r}")
        if self.mode not in ("joint", "uq-only", "mnc-only"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def fit(self, X, y):
        self._validate_params()
        reg = clone(self.regressor) if self.regressor is not None else AnchoredRegressor()
        self.regressor_ = reg.fit(X, y)
        self._finish_fit()
        return self

    @classmethod
    def from_fitted(cls, regressor: AnchoredRegressor, autoencoder=None, **params):
        self = cls(**params)
        self._validate_params()
        self.regressor_ = regressor
        if autoencoder is not None:
            self.autoencoder_ = autoencoder
        self._finish_fit()
        return self

    def _finish_fit(self):
        reg = self.regressor_
        size = len(reg.anchor_pool_) if self.anchor_batch is None else self.anchor_batch
        self.anchor_batch_ = AnchorBatch.draw(reg.anchor_pool_, reg.y_train_, size,
                                              self.random_state)
        self.sigma_scale_ = 1.0
        if self.score == "score2" and self.lam > 0 and not hasattr(self, "autoencoder_"):
            ae = clone(self.autoencoder) if self.autoencoder is not None else AnchoredAutoencoder(
                random_state=self.random_state)
            self.autoencoder_ = ae.fit(reg.anchor_pool_)

    def calibrate(self, X_cal, y_cal, coverage=0.9):
        """Use a held-out calibration set to rescale sigma for ``coverage`` and to
        extend the reverse-anchor batch with the calibration samples.

        Regime assignment is rank based, so the sigma multiplier changes the
        reported spreads but not the regimes.
        """
        check_is_fitted(self, "regressor_")
        X_cal, y_cal = check_X_y(X_cal, y_cal, dtype=np.float64, y_numeric=True)
        mu, sigma = self.regressor_.predict(X_cal, return_std=True)
        self.sigma_scale_ = calibrate_sigma(mu, sigma, y_cal, coverage)
        Z = self.regressor_.scale(X_cal)
        b = self.anchor_batch_
        self.anchor_batch_ = AnchorBatch(np.vstack([b.X, Z]), np.vstack([b.y, y_cal[:, None]]))
        return self

    def _mnc(self, Z):
        reg = self.regressor_
        if self.score == "score1":
            return score1(reg.model_, Z, self.anchor_batch_)
        cfg = Score2Config(self.eta, self.lam, self.n_iter, self.random_state)
        ae = getattr(self, "autoencoder_", None)
        return score2(reg.model_, getattr(ae, "model_", ae), Z, self.anchor_batch_, cfg)

    def score_samples(self, X) -> dict:
        """Per-sample ``mu``, ``sigma`` and ``mnc`` (the chosen non-conformity score)."""
        check_is_fitted(self, "regressor_")
        mu, sigma = self.regressor_.predict(X, return_std=True)
        mnc = self._mnc(self.regressor_.scale(X))
        return {"mu": mu, "sigma": sigma * self.sigma_scale_, "mnc": mnc}

    def regimes_from_scores(self, sigma, mnc) -> np.ndarray:
        if self.mode == "uq-only":
            return single_score_regimes(sigma)
        if self.mode == "mnc-only":
            return single_score_regimes(mnc)
        return assign_regimes(sigma, mnc, conditional=self.conditional)

    def predict(self, X) -> np.ndarray:
        s = self.score_samples(X)
        return self.regimes_from_scores(s["sigma"], s["mnc"])

    def evaluate(self, X, y) -> dict:
        """Metrics report on a labelled batch, with ``|y - mu|`` as the true risk."""
        y = np.asarray(y, dtype=np.float64)
        s = self.score_samples(X)
        regimes = self.regimes_from_scores(s["sigma"], s["mnc"])
        return _metrics.metrics_report(regimes, np.abs(y - s["mu"]))
