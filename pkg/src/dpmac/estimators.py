"""scikit-learn style wrappers around the functional trainers.

The estimators follow the usual contract: all constructor arguments are
stored verbatim (so ``get_params``/``set_params``/``clone`` work), arrays are
validated with the scikit-learn helpers, fitting never mutates the inputs,
and fitted state lives in trailing-underscore attributes.

Input rows are projected onto the L2 ball of radius ``norm_bound`` during
``fit`` and ``predict``: the privacy analysis is conditioned on that bound,
so it is enforced rather than assumed.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import network, pca
from .data import one_hot
from .mac import MacConfig, train_dp_mac
from .mechanism import PrivacyParams
from .sgd import SgdConfig, train_dp_sgd


def _as_generator(random_state) -> np.random.Generator:
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


class _MacBase(BaseEstimator):
    def __init__(self, hidden_units=(16,), hidden_act="softplus",
                 output_act="identity", taylor_order=1, mu=1.0,
                 norm_bound=1.0, epochs=5, batch_size=64, z_steps=10,
                 w_steps=1, z_lr=1e-2, w_lr=1e-2, w_lr_decay=1.0,
                 z_optimizer="adam", w_optimizer="adam",
                 sensitivity_mode="clipped", grad_clip=None, hess_clip=None,
                 persist_coords=False, init_scale=1.0, sigma=0.0, delta=1e-5,
                 random_state=None):
        self.hidden_units = hidden_units
        self.hidden_act = hidden_act
        self.output_act = output_act
        self.taylor_order = taylor_order
        self.mu = mu
        self.norm_bound = norm_bound
        self.epochs = epochs
        self.batch_size = batch_size
        self.z_steps = z_steps
        self.w_steps = w_steps
        self.z_lr = z_lr
        self.w_lr = w_lr
        self.w_lr_decay = w_lr_decay
        self.z_optimizer = z_optimizer
        self.w_optimizer = w_optimizer
        self.sensitivity_mode = sensitivity_mode
        self.grad_clip = grad_clip
        self.hess_clip = hess_clip
        self.persist_coords = persist_coords
        self.init_scale = init_scale
        self.sigma = sigma
        self.delta = delta
        self.random_state = random_state

    def _config(self, task: str) -> MacConfig:
        return MacConfig(
            hidden_units=tuple(self.hidden_units), task=task,
            hidden_act=self.hidden_act, output_act=self.output_act,
            taylor_order=self.taylor_order, mu=self.mu,
            coord_bound=self.norm_bound, epochs=self.epochs,
            batch_size=self.batch_size, z_steps=self.z_steps,
            w_steps=self.w_steps, z_lr=self.z_lr, w_lr=self.w_lr,
            w_lr_decay=self.w_lr_decay, z_optimizer=self.z_optimizer,
            w_optimizer=self.w_optimizer,
            sensitivity_mode=self.sensitivity_mode,
            grad_clip=self.grad_clip, hess_clip=self.hess_clip,
            persist_coords=self.persist_coords, init_scale=self.init_scale,
        )

    def _fit_common(self, X, targets, task):
        dataset = network.Dataset(X, targets, norm_bound=self.norm_bound)
        privacy = PrivacyParams(sigma=self.sigma, delta=self.delta)
        weights, report, metrics = train_dp_mac(
            dataset, self._config(task), privacy,
            seed=_as_generator(self.random_state))
        self.weights_ = weights
        self.privacy_report_ = report
        self.metrics_ = metrics
        self.epsilon_ = report.epsilon
        self.n_features_in_ = X.shape[1]
        return self


class DPMACClassifier(ClassifierMixin, _MacBase):
    """Multiclass classifier trained by the private alternating method."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        targets = one_hot(encoded, len(self.classes_))
        return self._fit_common(X, targets, task="xent")

    def decision_function(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        X = network.project_rows(X, self.norm_bound)
        return network.bce_output_logits(self.weights_, X, self.hidden_act)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


class DPMACRegressor(RegressorMixin, _MacBase):
    """Multi-output regressor / autoencoder trained by the private
    alternating method.  Targets must respect the coordinate bound when the
    analytic sensitivity mode is selected."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True)
        self.single_output_ = y.ndim == 1
        if y.ndim == 1:
            y = y[:, None]
        return self._fit_common(X, y, task="mse")

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        X = network.project_rows(X, self.norm_bound)
        out = network.predict(self.weights_, X, self.hidden_act,
                              self.output_act)
        return out[:, 0] if self.single_output_ else out


class _SgdBase(BaseEstimator):
    def __init__(self, hidden_units=(16,), hidden_act="softplus",
                 output_act="identity", norm_bound=1.0, epochs=5,
                 batch_size=64, lr=0.05, lr_decay=1.0,
                 lr_halving_epochs=None, clip_bound=None, sigma=0.0,
                 delta=1e-5, optimizer="gd", init_scale=1.0,
                 random_state=None):
        self.hidden_units = hidden_units
        self.hidden_act = hidden_act
        self.output_act = output_act
        self.norm_bound = norm_bound
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay = lr_decay
        self.lr_halving_epochs = lr_halving_epochs
        self.clip_bound = clip_bound
        self.sigma = sigma
        self.delta = delta
        self.optimizer = optimizer
        self.init_scale = init_scale
        self.random_state = random_state

    def _config(self, task: str) -> SgdConfig:
        return SgdConfig(
            hidden_units=tuple(self.hidden_units), task=task,
            hidden_act=self.hidden_act, output_act=self.output_act,
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            lr_decay=self.lr_decay, lr_halving_epochs=self.lr_halving_epochs,
            clip_bound=self.clip_bound, sigma=self.sigma, delta=self.delta,
            optimizer=self.optimizer, init_scale=self.init_scale,
        )

    def _fit_common(self, X, targets, task):
        dataset = network.Dataset(X, targets, norm_bound=self.norm_bound)
        weights, report, metrics = train_dp_sgd(
            dataset, self._config(task),
            seed=_as_generator(self.random_state))
        self.weights_ = weights
        self.privacy_report_ = report
        self.metrics_ = metrics
        self.epsilon_ = report.epsilon
        self.n_features_in_ = X.shape[1]
        return self


class DPSGDClassifier(ClassifierMixin, _SgdBase):
    """Multiclass classifier trained by noisy clipped gradient descent."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        targets = one_hot(encoded, len(self.classes_))
        return self._fit_common(X, targets, task="xent")

    def decision_function(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        X = network.project_rows(X, self.norm_bound)
        return network.bce_output_logits(self.weights_, X, self.hidden_act)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


class DPSGDRegressor(RegressorMixin, _SgdBase):
    """Multi-output regressor trained by noisy clipped gradient descent."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True)
        self.single_output_ = y.ndim == 1
        if y.ndim == 1:
            y = y[:, None]
        return self._fit_common(X, y, task="mse")

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        X = network.project_rows(X, self.norm_bound)
        out = network.predict(self.weights_, X, self.hidden_act,
                              self.output_act)
        return out[:, 0] if self.single_output_ else out


class DPPCA(TransformerMixin, BaseEstimator):
    """Noisy uncentered principal component projection.

    Rows are rescaled onto the unit ball before the second-moment matrix is
    released with per-entry noise std ``noise_std`` (one sensitivity-1
    Gaussian release; compose it into an accountant externally when part of
    a larger pipeline).
    """

    def __init__(self, n_components=2, noise_std=0.0, random_state=None):
        self.n_components = n_components
        self.noise_std = noise_std
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        X = network.project_rows(X, 1.0)
        projection = pca.dp_pca(X, self.n_components, self.noise_std,
                                _as_generator(self.random_state))
        self.components_ = projection.T
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X)
        return X @ self.components_.T
