"""Scikit-learn style estimators wrapping the training and regression
pipelines.

Every estimator is fitted on aligned state/derivative arrays and predicts
full trajectories from an initial condition:

    est = QuadEmbeds(latent_dim=3, epochs=1000).fit(X, Xdot)
    traj = est.predict(x0, t)

``transform`` exposes the learned (lifted or projected) coordinates where
one exists.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import baselines, train as _train
from .evaluation import RolloutResult, rollout
from .odeint import IntegratorConfig
from .qdyn import ContractError
from .systems import TrajectoryDataset
from ._validation import check_state_derivative_pair, check_vector


def _as_dataset(X, Xdot) -> TrajectoryDataset:
    X, Xdot = check_state_derivative_pair(X, Xdot)
    n = len(X)
    return TrajectoryDataset(X=X, Xdot=Xdot, times=np.arange(n, dtype=float),
                             offsets=np.array([0, n]))


class _RolloutMixin:
    """predict(x0, t) through encode -> integrate -> decode."""

    def _encode(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _decode(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x0, t, integrator: Optional[IntegratorConfig] = None
                ) -> np.ndarray:
        return self.rollout(x0, t, integrator).X

    def rollout(self, x0, t, integrator: Optional[IntegratorConfig] = None
                ) -> RolloutResult:
        x0 = check_vector(x0, "x0")
        return rollout(self._encode, self.model_, self._decode, x0,
                       np.asarray(t, dtype=float), integrator)

    def transform(self, X):
        return self._encode(np.atleast_2d(np.asarray(X, dtype=float)))

    def inverse_transform(self, Z):
        return self._decode(np.atleast_2d(np.asarray(Z, dtype=float)))


class QuadEmbeds(_RolloutMixin, TransformerMixin, BaseEstimator):
    """Autoencoder lifting with jointly learned quadratic latent dynamics."""

    def __init__(self, latent_dim: int = 3, hidden_width: int = 8,
                 hidden_depth: int = 3, learning_rate: float = 3e-3,
                 batch_size: int = 32, weight_decay: float = 1e-5,
                 epochs: int = 4000, lr_decay_every: int = 1500,
                 lambda_recon: float = 1.0, lambda_dx_from_dz: float = 0.0,
                 lambda_dz_from_dx: float = 1.0, stable: bool = True,
                 architecture: str = "mlp", normalize: bool = False,
                 quadratic_warmup_epochs: int = 0, seed: int = 0):
        self.latent_dim = latent_dim
        self.hidden_width = hidden_width
        self.hidden_depth = hidden_depth
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.lr_decay_every = lr_decay_every
        self.lambda_recon = lambda_recon
        self.lambda_dx_from_dz = lambda_dx_from_dz
        self.lambda_dz_from_dx = lambda_dz_from_dx
        self.stable = stable
        self.architecture = architecture
        self.normalize = normalize
        self.quadratic_warmup_epochs = quadratic_warmup_epochs
        self.seed = seed

    _quadratic = True

    def _train_config(self) -> _train.TrainConfig:
        return _train.TrainConfig(
            latent_dim=self.latent_dim, hidden_width=self.hidden_width,
            hidden_depth=self.hidden_depth, learning_rate=self.learning_rate,
            batch_size=self.batch_size, weight_decay=self.weight_decay,
            epochs=self.epochs, lr_decay_every=self.lr_decay_every,
            lambdas=(self.lambda_recon, self.lambda_dx_from_dz,
                     self.lambda_dz_from_dx),
            stable=self.stable, quadratic=self._quadratic,
            architecture=self.architecture,
            quadratic_warmup_epochs=self.quadratic_warmup_epochs,
            seed=self.seed)

    def fit(self, X, Xdot, checkpoint_dir=None, log_every: int = 0):
        X, Xdot = check_state_derivative_pair(X, Xdot)
        if not self.normalize:
            self.scale_ = 1.0
        elif self.architecture == "conv":
            # shared conv filters: one global scale keeps translation structure
            self.scale_ = float(np.max(np.abs(X)))
        else:
            s = np.max(np.abs(X), axis=0)
            self.scale_ = np.where(s > 0.0, s, 1.0)
        ds = _as_dataset(X / self.scale_, Xdot / self.scale_)
        ae, model, stable_params, history = _train.fit_quad_embeds(
            ds, self._train_config(), checkpoint_dir=checkpoint_dir,
            log_every=log_every)
        self.autoencoder_ = ae
        self.model_ = model
        self.stable_params_ = stable_params
        self.history_ = history
        return self

    def _encode(self, X):
        return self.autoencoder_.encode_np(X / self.scale_)

    def _decode(self, Z):
        return self.autoencoder_.decode_np(Z) * self.scale_


class LinearEmbeds(QuadEmbeds):
    """Same machinery with the latent dynamics restricted to dz = A z."""

    _quadratic = False


class QuadOpInf(_RolloutMixin, BaseEstimator):
    """Quadratic operator inference in the measured coordinates."""

    def __init__(self, include_constant: bool = True):
        self.include_constant = include_constant

    def fit(self, X, Xdot):
        X, Xdot = check_state_derivative_pair(X, Xdot)
        self.model_ = baselines.fit_quad_opinf(X, Xdot, self.include_constant)
        return self

    def _encode(self, X):
        return np.atleast_2d(X)

    def _decode(self, Z):
        return np.atleast_2d(Z)


class LinProjQOpInf(_RolloutMixin, TransformerMixin, BaseEstimator):
    """POD projection plus quadratic operator inference in the subspace."""

    def __init__(self, r: int = 4, include_constant: bool = True):
        self.r = r
        self.include_constant = include_constant

    def fit(self, X, Xdot):
        X, Xdot = check_state_derivative_pair(X, Xdot)
        self.basis_, self.model_ = baselines.fit_linproj_qopinf(
            X, Xdot, self.r, self.include_constant)
        return self

    def _encode(self, X):
        return self.basis_.project(X)

    def _decode(self, Z):
        return self.basis_.reconstruct(Z)


class QuadProjQOpInf(_RolloutMixin, TransformerMixin, BaseEstimator):
    """POD projection with a quadratic-manifold reconstruction."""

    def __init__(self, r: int = 4, ridge_rel: float = 1e-10,
                 include_constant: bool = True):
        self.r = r
        self.ridge_rel = ridge_rel
        self.include_constant = include_constant

    def fit(self, X, Xdot):
        X, Xdot = check_state_derivative_pair(X, Xdot)
        self.manifold_, self.model_, self.basis_ = baselines.fit_quadproj_qopinf(
            X, Xdot, self.r, self.ridge_rel, self.include_constant)
        return self

    def _encode(self, X):
        return self.basis_.project(X)

    def _decode(self, Z):
        return self.manifold_.decode(Z)


METHODS = {
    "quad-embeds": QuadEmbeds,
    "linear-embeds": LinearEmbeds,
    "quad-opinf": QuadOpInf,
    "linproj-qopinf": LinProjQOpInf,
    "quadproj-qopinf": QuadProjQOpInf,
}


def make_estimator(method: str, **kwargs):
    try:
        cls = METHODS[method]
    except KeyError:
        raise ContractError(f"unknown method {method!r}") from None
    return cls(**kwargs)
