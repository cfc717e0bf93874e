import numpy as np
import pytest

from quadlift import nets, qdyn
from quadlift import tensor as T
from quadlift.systems import TrajectoryDataset
from quadlift.tensor import Tensor
from quadlift.train import (Adam, LatentModelParams, PruneConfig, TrainConfig,
                            TrainHistory, TrainingError, fit_quad_embeds,
                            lr_at, mixed_norm, prune_quadratic, total_loss)

from conftest import finite_diff_grad


class TestMixedNorm:
    def test_single_entry(self):
        # 0.5*|v| + 0.5*|v| = |v|
        assert mixed_norm(np.array([-3.0])).data == pytest.approx(3.0)

    def test_vector_by_hand(self):
        v = np.array([3.0, -4.0])
        # 0.5*5 + 0.5*7 = 6
        assert mixed_norm(v).data == pytest.approx(6.0)

    def test_zero(self):
        assert mixed_norm(np.zeros(4)).data == pytest.approx(0.0)


class TestLrSchedule:
    def test_step_decay(self):
        assert lr_at(0, 3e-3, 1500) == pytest.approx(3e-3)
        assert lr_at(1499, 3e-3, 1500) == pytest.approx(3e-3)
        assert lr_at(1500, 3e-3, 1500) == pytest.approx(3e-4)
        assert lr_at(3000, 3e-3, 1500) == pytest.approx(3e-5)

    def test_never_decays_when_period_exceeds_epochs(self):
        assert lr_at(399, 5e-3, 400) == pytest.approx(5e-3)


class TestAdam:
    def test_first_step_is_signed_lr(self):
        # With bias correction, step 1 moves each weight by ~lr*sign(g).
        p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        p.grad = np.array([0.5, -2.0])
        opt = Adam({"p": p})
        opt.step(0.1)
        np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-6)

    def test_quadratic_convergence(self):
        p = Tensor(np.array([5.0]), requires_grad=True)
        opt = Adam({"p": p})
        for _ in range(800):
            p.grad = 2.0 * p.data
            opt.step(0.05)
        assert abs(p.data[0]) < 1e-3

    def test_decoupled_weight_decay_shrinks_before_update(self):
        p = Tensor(np.array([2.0]), requires_grad=True)
        p.grad = np.zeros(1)
        opt = Adam({"p": p}, weight_decay=0.1)
        opt.step(1.0)
        assert p.data[0] == pytest.approx(2.0 * 0.9)

    def test_nonfinite_gradient_raises(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([np.nan])
        with pytest.raises(TrainingError):
            Adam({"p": p}).step(0.1)

    def test_none_gradient_skipped(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"p": p})
        opt.step(0.1)
        assert p.data[0] == 1.0


class TestLatentModelParams:
    def test_stable_rhs_matches_realized_model(self, rng):
        lat = LatentModelParams(3, stable=True, seed=4)
        for p in lat.parameters().values():
            p.data = rng.normal(size=p.data.shape)
        model, _ = lat.to_numpy()
        Z = rng.normal(size=(6, 3))
        graph = lat.rhs_graph(T.as_tensor(Z))
        np.testing.assert_allclose(graph.data, model.rhs(Z),
                                   rtol=1e-12, atol=1e-12)

    def test_unconstrained_rhs_matches_realized_model(self, rng):
        lat = LatentModelParams(3, stable=False, seed=4)
        for p in lat.parameters().values():
            p.data = rng.normal(size=p.data.shape)
        model, stable_p = lat.to_numpy()
        assert stable_p is None
        Z = rng.normal(size=(5, 3))
        np.testing.assert_allclose(lat.rhs_graph(T.as_tensor(Z)).data,
                                   model.rhs(Z), rtol=1e-12, atol=1e-12)

    def test_linear_mode_has_no_quadratic_term(self):
        lat = LatentModelParams(3, stable=True, quadratic=False, seed=0)
        model, _ = lat.to_numpy()
        np.testing.assert_array_equal(model.H, 0.0)
        assert "model.H_raw0" not in lat.parameters()

    def test_stable_realization_always_dissipative(self, rng):
        lat = LatentModelParams(4, stable=True, seed=11)
        for p in lat.parameters().values():
            p.data = rng.normal(size=p.data.shape)
        model, _ = lat.to_numpy()
        for _ in range(50):
            z = rng.normal(size=4)
            assert qdyn.energy_rate(model, z) <= 1e-12


class TestTotalLoss:
    @pytest.fixture()
    def setup(self, rng):
        ae = nets.MlpAutoencoder.create(2, 3, width=8, depth=2, seed=5)
        lat = LatentModelParams(3, stable=True, seed=6)
        X = rng.normal(size=(4, 2))
        Xdot = rng.normal(size=(4, 2))
        return ae, lat, X, Xdot

    def test_terms_sum_with_weights(self, setup):
        ae, lat, X, Xdot = setup
        lambdas = (1.0, 0.5, 2.0)
        loss, terms = total_loss(X, Xdot, ae, lat, lambdas)
        expected = (lambdas[0] * terms["recon"]
                    + lambdas[1] * terms["dx_from_dz"]
                    + lambdas[2] * terms["dz_from_dx"])
        assert float(loss.data) == pytest.approx(expected, rel=1e-12)

    def test_zero_weight_skips_term(self, setup):
        ae, lat, X, Xdot = setup
        loss, terms = total_loss(X, Xdot, ae, lat, (1.0, 0.0, 1.0))
        assert terms["dx_from_dz"] == 0.0
        assert np.isfinite(loss.data)

    def test_perfect_identity_model_reaches_zero_recon(self, rng):
        # An autoencoder that is exactly the identity on a matched latent
        # dimension gives zero reconstruction loss.
        ae = nets.MlpAutoencoder.create(2, 2, width=4, depth=1, seed=0)
        for name, p in ae.parameters().items():
            p.data[...] = 0.0
        # encoder: first linear 2->4 picks the state into the first two
        # channels; silu is not identity, so instead drive both nets to
        # linear-only behaviour through the final layers being zero and
        # check the loss is the mixed norm of x itself.
        X = rng.normal(size=(3, 2))
        lat = LatentModelParams(2, stable=True, seed=0)
        loss, terms = total_loss(X, np.zeros_like(X), ae, lat, (1.0, 0.0, 0.0))
        fro = np.linalg.norm(X, axis=1)
        l1 = np.abs(X).sum(axis=1)
        assert terms["recon"] == pytest.approx(
            np.mean(0.5 * fro + 0.5 * l1), rel=1e-12)

    @pytest.mark.parametrize("lambdas", [(1.0, 0.0, 1.0), (1.0, 0.5, 1.0)])
    def test_gradients_match_finite_differences(self, setup, lambdas):
        ae, lat, X, Xdot = setup
        params = {**ae.parameters(), **lat.parameters()}

        def run():
            loss, _ = total_loss(X, Xdot, ae, lat, lambdas)
            return loss

        loss = run()
        for p in params.values():
            p.grad = None
        T.backward(loss)
        worst = 0.0
        for name, p in params.items():
            analytic = p.grad.copy()
            fd = finite_diff_grad(lambda: float(run().data), p.data)
            scale = max(np.abs(analytic).max(), np.abs(fd).max(), 1e-8)
            worst = max(worst, np.abs(analytic - fd).max() / scale)
        assert worst < 1e-4


class TestPruning:
    def test_zero_threshold_is_identity(self, rng):
        model = qdyn.QuadraticModel(A=rng.normal(size=(2, 2)),
                                    H=rng.normal(size=(2, 2, 2)))
        assert prune_quadratic(model, 0.0) is model

    def test_small_entries_zeroed(self):
        H = np.zeros((2, 2, 2))
        H[0, 0, 1] = 1.0
        H[1, 0, 0] = 1e-4
        model = qdyn.QuadraticModel(A=np.eye(2), H=H)
        pruned = prune_quadratic(model, 1e-3)
        assert pruned.H[0, 0, 1] == 1.0
        assert pruned.H[1, 0, 0] == 0.0

    def test_unconstrained_off_diagonal_A_pruned(self):
        A = np.array([[1.0, 1e-6], [1e-6, 1.0]])
        model = qdyn.QuadraticModel(A=A, H=np.ones((2, 2, 2)), stable=False)
        pruned = prune_quadratic(model, 1e-3)
        assert pruned.A[0, 1] == 0.0 and pruned.A[1, 0] == 0.0
        np.testing.assert_array_equal(np.diag(pruned.A), [1.0, 1.0])

    def test_negative_threshold_rejected(self):
        model = qdyn.QuadraticModel(A=np.eye(1), H=np.zeros((1, 1, 1)))
        with pytest.raises(ValueError):
            prune_quadratic(model, -0.1)


class TestHistory:
    def test_round_trip(self, tmp_path):
        h = TrainHistory()
        h.append(epoch=0, loss_total=1.5, loss_recon=1.0,
                 loss_dx_from_dz=0.0, loss_dz_from_dx=0.5, lr=3e-3,
                 wall_time=0.1)
        h.append(epoch=1, loss_total=1.2, loss_recon=0.8,
                 loss_dx_from_dz=0.0, loss_dz_from_dx=0.4, lr=3e-3,
                 wall_time=0.2)
        path = tmp_path / "history.csv"
        h.to_csv(path)
        back = TrainHistory.from_csv(path)
        assert len(back.records) == 2
        assert back.records[1]["epoch"] == 1
        assert back.final_total() == pytest.approx(1.2)


def toy_dataset(seed=0, n_traj=4, samples=20):
    """Linear dissipative 2-D system: easy to embed, quick to fit."""
    rng = np.random.default_rng(seed)
    A = np.array([[-0.5, 1.0], [-1.0, -0.5]])
    t = np.linspace(0.0, 2.0, samples)
    blocks, dblocks = [], []
    from scipy.linalg import expm
    for _ in range(n_traj):
        x0 = rng.uniform(-1, 1, size=2)
        traj = np.stack([expm(A * tk) @ x0 for tk in t])
        blocks.append(traj)
        dblocks.append(traj @ A.T)
    return TrajectoryDataset(
        X=np.concatenate(blocks), Xdot=np.concatenate(dblocks),
        times=np.tile(t, n_traj), offsets=samples * np.arange(n_traj + 1),
        meta={"system": "toy", "seed": seed})


class TestFitLoop:
    def test_loss_decreases_on_toy_problem(self):
        ds = toy_dataset()
        cfg = TrainConfig(latent_dim=2, hidden_width=8, hidden_depth=2,
                          epochs=300, lr_decay_every=200, batch_size=16,
                          learning_rate=3e-3, seed=0)
        ae, model, stable_p, history = fit_quad_embeds(ds, cfg)
        assert history.records[-1]["loss_total"] \
            < 0.5 * history.records[0]["loss_total"]
        assert model.stable and stable_p is not None

    def test_reproducible(self):
        ds = toy_dataset()
        cfg = TrainConfig(latent_dim=2, epochs=5, lr_decay_every=10, seed=3)
        _, m1, _, h1 = fit_quad_embeds(ds, cfg)
        _, m2, _, h2 = fit_quad_embeds(ds, cfg)
        np.testing.assert_array_equal(m1.A, m2.A)
        np.testing.assert_array_equal(m1.H, m2.H)
        drop_time = [{k: v for k, v in r.items() if k != "wall_time"}
                     for r in h1.records]
        drop_time2 = [{k: v for k, v in r.items() if k != "wall_time"}
                      for r in h2.records]
        assert drop_time == drop_time2

    def test_checkpoints_written(self, tmp_path):
        ds = toy_dataset()
        cfg = TrainConfig(latent_dim=2, epochs=6, lr_decay_every=3, seed=0)
        fit_quad_embeds(ds, cfg, checkpoint_dir=tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert "autoencoder_final.json" in names
        assert "model_final.json" in names
        assert "model_epoch3.json" in names and "model_epoch6.json" in names

    def test_pruned_entries_stay_zero(self):
        ds = toy_dataset()
        cfg = TrainConfig(latent_dim=2, epochs=12, lr_decay_every=20, seed=1,
                          prune=PruneConfig(threshold=0.5, start_epoch=12))
        _, model, _, _ = fit_quad_embeds(ds, cfg)
        cut = 0.5 * np.max(np.abs(model.H))
        keep = np.abs(model.H) >= cut
        keep = keep | np.transpose(keep, (0, 2, 1))
        assert np.all(model.H[~keep] == 0.0)
        assert np.any(~keep)

    def test_quadratic_warmup_holds_h_at_zero(self):
        ds = toy_dataset()
        cfg = TrainConfig(latent_dim=2, epochs=4, lr_decay_every=10, seed=0,
                          quadratic_warmup_epochs=4)
        _, model, _, _ = fit_quad_embeds(ds, cfg)
        assert np.all(model.H == 0.0)
        assert np.any(model.A != 0.0)

    def test_quadratic_warmup_then_release(self):
        ds = toy_dataset()
        cfg = TrainConfig(latent_dim=2, epochs=6, lr_decay_every=10, seed=0,
                          quadratic_warmup_epochs=3)
        _, model, _, _ = fit_quad_embeds(ds, cfg)
        assert np.any(model.H != 0.0)

    def test_quadratic_warmup_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=5, quadratic_warmup_epochs=6)
        with pytest.raises(ValueError):
            TrainConfig(quadratic_warmup_epochs=-1)

    def test_empty_dataset_rejected(self):
        ds = toy_dataset(n_traj=1, samples=2)
        ds.X = ds.X[:0]
        ds.Xdot = ds.Xdot[:0]
        ds.times = ds.times[:0]
        with pytest.raises(TrainingError):
            fit_quad_embeds(ds, TrainConfig(epochs=1))

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(lambdas=(1.0, -1.0, 1.0))
        with pytest.raises(ValueError):
            TrainConfig(architecture="transformer")
