import numpy as np
import pytest
from scipy.linalg import expm

from quadlift.estimators import (METHODS, LinProjQOpInf, LinearEmbeds,
                                 QuadEmbeds, QuadOpInf, QuadProjQOpInf,
                                 make_estimator)
from quadlift.odeint import IntegratorConfig
from quadlift.qdyn import ContractError, QuadraticModel
from quadlift._validation import ValidationError


def linear_data(n_samples=200, seed=0):
    A = np.array([[-0.4, 1.0], [-1.0, -0.4]])
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_samples, 2))
    return A, X, X @ A.T


def embedded_linear_data(d=8, r=3, n_samples=200, seed=1):
    rng = np.random.default_rng(seed)
    V = np.linalg.qr(rng.normal(size=(d, r)))[0]
    A_lat = rng.normal(size=(r, r)) - 1.5 * np.eye(r)
    Z = rng.normal(size=(n_samples, r))
    return V, A_lat, Z @ V.T, (Z @ A_lat.T) @ V.T


class TestQuadOpInf:
    def test_predict_matches_matrix_exponential(self):
        A, X, Xdot = linear_data()
        est = QuadOpInf().fit(X, Xdot)
        t = np.linspace(0.0, 2.0, 21)
        x0 = np.array([1.0, -0.5])
        pred = est.predict(x0, t, IntegratorConfig(rtol=1e-10, atol=1e-12))
        truth = np.stack([expm(A * tk) @ x0 for tk in t])
        np.testing.assert_allclose(pred, truth, atol=1e-6)

    def test_transform_is_identity(self):
        A, X, Xdot = linear_data()
        est = QuadOpInf().fit(X, Xdot)
        np.testing.assert_array_equal(est.transform(X[:5]), X[:5])

    def test_get_params_round_trip(self):
        est = QuadOpInf(include_constant=False)
        params = est.get_params()
        assert params == {"include_constant": False}
        est.set_params(include_constant=True)
        assert est.include_constant


class TestQuadEmbeds:
    def test_sklearn_param_protocol(self):
        est = QuadEmbeds(latent_dim=4, epochs=7)
        p = est.get_params()
        assert p["latent_dim"] == 4 and p["epochs"] == 7
        est.set_params(latent_dim=2)
        assert est.latent_dim == 2

    def test_fit_sets_artifacts(self):
        _, X, Xdot = linear_data(n_samples=64)
        est = QuadEmbeds(latent_dim=2, epochs=3, lr_decay_every=10,
                         hidden_width=4, hidden_depth=1).fit(X, Xdot)
        assert est.model_.n == 2
        assert est.stable_params_ is not None
        assert len(est.history_.records) == 3
        assert est.scale_ == 1.0

    def test_normalization_round_trip(self):
        _, X, Xdot = linear_data(n_samples=64)
        X = 50.0 * X
        est = QuadEmbeds(latent_dim=2, epochs=2, lr_decay_every=10,
                         hidden_width=4, hidden_depth=1,
                         normalize=True).fit(X, Xdot)
        assert est.scale_ == pytest.approx(np.max(np.abs(X), axis=0))
        Z = est.transform(X[:3])
        assert est.inverse_transform(Z).shape == (3, 2)

    def test_rollout_of_stable_fit_never_grows(self):
        _, X, Xdot = linear_data(n_samples=64)
        est = QuadEmbeds(latent_dim=2, epochs=5, lr_decay_every=10,
                         hidden_width=4, hidden_depth=1).fit(X, Xdot)
        t = np.linspace(0.0, 10.0, 101)
        res = est.rollout(X[0], t, IntegratorConfig(rtol=1e-9, atol=1e-12))
        assert not res.aborted

    def test_linear_embeds_has_zero_quadratic_term(self):
        _, X, Xdot = linear_data(n_samples=64)
        est = LinearEmbeds(latent_dim=2, epochs=2, lr_decay_every=10,
                           hidden_width=4, hidden_depth=1).fit(X, Xdot)
        np.testing.assert_array_equal(est.model_.H, 0.0)

    def test_input_validation(self):
        est = QuadEmbeds(epochs=1)
        with pytest.raises(ValidationError):
            est.fit(np.ones((4, 2)), np.ones((5, 2)))
        with pytest.raises(ValidationError):
            est.fit(np.array([[np.nan, 1.0]]), np.ones((1, 2)))


class TestProjectedEstimators:
    def test_linproj_recovers_subspace_dynamics(self):
        V, A_lat, X, Xdot = embedded_linear_data()
        est = LinProjQOpInf(r=3).fit(X, Xdot)
        t = np.linspace(0.0, 1.0, 11)
        x0 = X[0]
        pred = est.predict(x0, t, IntegratorConfig(rtol=1e-10, atol=1e-12))
        z0 = V.T @ x0
        truth = np.stack([V @ (expm(A_lat * tk) @ z0) for tk in t])
        np.testing.assert_allclose(pred, truth, atol=1e-6)

    def test_quadproj_fit_artifacts(self):
        V, A_lat, X, Xdot = embedded_linear_data()
        est = QuadProjQOpInf(r=3).fit(X, Xdot)
        assert est.manifold_.V.shape == (8, 3)
        assert est.model_.n == 3
        assert est.transform(X[:4]).shape == (4, 3)

    def test_r_larger_than_rank_rejected(self):
        _, X, Xdot = linear_data(n_samples=10)
        with pytest.raises(ContractError):
            LinProjQOpInf(r=5).fit(X, Xdot)


class TestRegistry:
    def test_all_methods_constructible(self):
        for name in METHODS:
            est = make_estimator(name)
            assert est.__class__ is METHODS[name]

    def test_kwargs_forwarded(self):
        est = make_estimator("quad-embeds", latent_dim=7)
        assert est.latent_dim == 7

    def test_unknown_method(self):
        with pytest.raises(ContractError):
            make_estimator("dmd")

    def test_expected_method_names(self):
        assert set(METHODS) == {"quad-embeds", "linear-embeds", "quad-opinf",
                                "linproj-qopinf", "quadproj-qopinf"}
