"""Loss functions, optimizer, schedule, and the embedding training loop.

The total loss combines a reconstruction term, an optional decoder-side
derivative term, and the encoder-side derivative term that forces the
latent dynamics to follow the (optionally stability-parameterized)
quadratic model.  All terms use a mixed norm, half Frobenius plus half l1,
averaged over the batch.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import nets, qdyn
from . import tensor as T
from .tensor import Tensor
from .systems import TrajectoryDataset


class TrainingError(RuntimeError):
    pass


@dataclass
class PruneConfig:
    threshold: float = 0.0
    start_epoch: int = 0


@dataclass
class TrainConfig:
    latent_dim: int = 3
    hidden_width: int = 8
    hidden_depth: int = 3
    learning_rate: float = 3e-3
    batch_size: int = 32
    weight_decay: float = 1e-5
    epochs: int = 4000
    lr_decay_every: int = 1500          # decay learning rate by 1/10 every M epochs
    lambdas: tuple = (1.0, 0.0, 1.0)    # (recon, dx-from-dz, dz-from-dx)
    stable: bool = True
    quadratic: bool = True              # False: linear latent dynamics
    architecture: str = "mlp"           # or "conv"
    quadratic_warmup_epochs: int = 0    # hold H at zero for the first N epochs
    prune: Optional[PruneConfig] = None
    seed: int = 0

    def __post_init__(self):
        if any(l < 0 for l in self.lambdas):
            raise ValueError("loss weights must be non-negative")
        if self.lr_decay_every > self.epochs:
            # harmless: the schedule simply never fires
            pass
        if self.architecture not in ("mlp", "conv"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if not 0 <= self.quadratic_warmup_epochs <= self.epochs:
            raise ValueError("quadratic_warmup_epochs must lie in [0, epochs]")


# ---------------------------------------------------------------------------
# latent model parameters (graph-side)

class LatentModelParams:
    """Trainable operators of the latent system, realized in-graph.

    Stable mode keeps unconstrained raws whose realization is always a
    guaranteed-stable model (skew J, R = L L^T, skew H slices, no constant
    term).  Unconstrained mode trains A, H, B directly.
    """

    def __init__(self, n: int, stable: bool = True, quadratic: bool = True,
                 seed: int = 0, init_scale: float = 0.1,
                 dissipation: float = 0.1):
        self.n = n
        self.stable = stable
        self.quadratic = quadratic
        rng = np.random.default_rng(seed)
        if stable:
            self.J_raw = Tensor(rng.uniform(-init_scale, init_scale, (n, n)),
                                requires_grad=True)
            self.L_raw = Tensor(dissipation * np.eye(n), requires_grad=True)
            self.H_raw = [Tensor(rng.uniform(-init_scale, init_scale, (n, n)),
                                 requires_grad=True)
                          for _ in range(n)] if quadratic else []
            self.B = None
        else:
            self.A = Tensor(rng.uniform(-init_scale, init_scale, (n, n)),
                            requires_grad=True)
            self.H_slices = [Tensor(rng.uniform(-init_scale, init_scale, (n, n)),
                                    requires_grad=True)
                             for _ in range(n)] if quadratic else []
            self.B = Tensor(np.zeros(n), requires_grad=True)

    def parameters(self) -> dict:
        if self.stable:
            out = {"model.J_raw": self.J_raw, "model.L_raw": self.L_raw}
            for i, h in enumerate(self.H_raw):
                out[f"model.H_raw{i}"] = h
            return out
        out = {"model.A": self.A, "model.B": self.B}
        for i, h in enumerate(self.H_slices):
            out[f"model.H{i}"] = h
        return out

    def _realized_slices(self):
        if self.stable:
            return [T.scale(h - T.transpose(h), 0.5) for h in self.H_raw]
        return list(self.H_slices)

    def rhs_graph(self, z: Tensor) -> Tensor:
        """A z + H (z kron z) + B for a batch of latents, differentiable."""
        if self.stable:
            J = T.scale(self.J_raw - T.transpose(self.J_raw), 0.5)
            R = T.matmul(self.L_raw, T.transpose(self.L_raw))
            A = J - R
        else:
            A = self.A
        out = T.matmul(z, T.transpose(A))
        slices = self._realized_slices()
        if slices:
            # H_flat^T stacks the transposed slices: row i*n+j maps z_i z_j
            h_t = T.concat([T.transpose(s) for s in slices], axis=0)
            out = out + T.matmul(T.kron_self(z), h_t)
        if self.B is not None:
            out = out + self.B
        return out

    def to_numpy(self):
        """Realized QuadraticModel plus StableParams when applicable."""
        n = self.n
        if self.stable:
            H_raw = np.array([h.data for h in self.H_raw]) if self.quadratic \
                else np.zeros((n, n, n))
            p = qdyn.StableParams(J_raw=self.J_raw.data.copy(),
                                  L_raw=self.L_raw.data.copy(),
                                  H_raw=H_raw)
            return qdyn.realize_stable(p), p
        H = np.array([h.data for h in self.H_slices]) if self.quadratic \
            else np.zeros((n, n, n))
        model = qdyn.QuadraticModel(A=self.A.data.copy(), H=H,
                                    B=self.B.data.copy())
        return model, None


# ---------------------------------------------------------------------------
# losses

def mixed_norm(v) -> Tensor:
    """0.5 * Frobenius norm + 0.5 * l1 norm over all entries."""
    v = T.as_tensor(v)
    return T.scale(T.sqrt(T.tsum(T.square(v))), 0.5) \
        + T.scale(T.tsum(T.tabs(v)), 0.5)


def _row_mixed_mean(residual: Tensor) -> Tensor:
    """Mean over batch rows of the mixed norm of each row."""
    fro = T.sqrt(T.tsum(T.square(residual), axis=1))
    l1 = T.tsum(T.tabs(residual), axis=1)
    return T.tmean(T.scale(fro, 0.5) + T.scale(l1, 0.5))


def loss_z_from_x(x, xdot, autoencoder, latent: LatentModelParams) -> Tensor:
    """Mismatch between the chain-rule latent derivative and the model rhs."""
    z, zdot = autoencoder.encode_with_tangent(x, xdot)
    return _row_mixed_mean(zdot - latent.rhs_graph(z))


def loss_x_from_z(x, xdot, autoencoder, latent: LatentModelParams) -> Tensor:
    """Mismatch between the data derivative and the decoded model derivative."""
    z = autoencoder.encode(x)
    zdot_model = latent.rhs_graph(z)
    _, xdot_model = autoencoder.decode_with_tangent(z, zdot_model)
    return _row_mixed_mean(T.as_tensor(xdot) - xdot_model)


def loss_recon(x, autoencoder) -> Tensor:
    z = autoencoder.encode(x)
    return _row_mixed_mean(T.as_tensor(x) - autoencoder.decode(z))


def total_loss(x, xdot, autoencoder, latent: LatentModelParams,
               lambdas=(1.0, 0.0, 1.0)):
    """Weighted loss; returns (scalar tensor, per-term float dict).

    Shares the encoder pass between terms; the decoder-derivative term is
    skipped entirely when its weight is zero.
    """
    lam1, lam2, lam3 = lambdas
    x_t = T.as_tensor(x)
    need_tangent = lam3 > 0
    if need_tangent:
        z, zdot = autoencoder.encode_with_tangent(x_t, xdot)
    else:
        z = autoencoder.encode(x_t)
    zdot_model = latent.rhs_graph(z) if (lam2 > 0 or lam3 > 0) else None
    terms = {}
    total = None

    def accumulate(weight, term, key):
        nonlocal total
        terms[key] = float(term.data)
        piece = T.scale(term, weight)
        total = piece if total is None else total + piece

    if lam1 > 0:
        accumulate(lam1, _row_mixed_mean(x_t - autoencoder.decode(z)), "recon")
    else:
        terms["recon"] = 0.0
    if lam2 > 0:
        _, xdot_model = autoencoder.decode_with_tangent(z, zdot_model)
        accumulate(lam2, _row_mixed_mean(T.as_tensor(xdot) - xdot_model),
                   "dx_from_dz")
    else:
        terms["dx_from_dz"] = 0.0
    if lam3 > 0:
        accumulate(lam3, _row_mixed_mean(zdot - zdot_model), "dz_from_dx")
    else:
        terms["dz_from_dx"] = 0.0
    if total is None:
        total = Tensor(0.0)
    return total, terms


# ---------------------------------------------------------------------------
# optimizer and schedule

class Adam:
    """Adam with decoupled weight decay (applied multiplicatively first)."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = dict(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {name}")
            if self.weight_decay:
                p.data *= (1.0 - lr * self.weight_decay)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            p.data -= lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2)
                                                  + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {"t": self.t,
                "m": {k: v.ravel().tolist() for k, v in self.m.items()},
                "v": {k: v.ravel().tolist() for k, v in self.v.items()}}


def lr_at(epoch: int, base_lr: float, decay_every: int) -> float:
    """Step decay by a factor 10 every `decay_every` epochs."""
    return base_lr * 10.0 ** (-(epoch // decay_every))


def prune_quadratic(model: qdyn.QuadraticModel, threshold: float
                    ) -> qdyn.QuadraticModel:
    """Zero quadratic entries small relative to the largest one.

    Entries with |value| < threshold * max|H| are set to zero; in
    unconstrained mode the same cutoff is applied to off-diagonals of A.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if threshold == 0:
        return model
    hmax = np.max(np.abs(model.H))
    cut = threshold * hmax
    H = np.where(np.abs(model.H) < cut, 0.0, model.H)
    A = model.A.copy()
    if not model.stable:
        off = ~np.eye(model.n, dtype=bool)
        A[off & (np.abs(A) < cut)] = 0.0
    return qdyn.QuadraticModel(A=A, H=H, B=None if model.B is None
                               else model.B.copy(), stable=model.stable)


# ---------------------------------------------------------------------------
# history

@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, **kwargs):
        self.records.append(kwargs)

    FIELDS = ("epoch", "loss_total", "loss_recon", "loss_dx_from_dz",
              "loss_dz_from_dx", "lr", "wall_time")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.FIELDS)
            w.writeheader()
            for r in self.records:
                w.writerow(r)

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(epoch=int(row["epoch"]),
                           **{k: float(row[k]) for k in cls.FIELDS[1:]})
        return out

    def final_total(self) -> float:
        return self.records[-1]["loss_total"]


# ---------------------------------------------------------------------------
# training loop

def _make_autoencoder(cfg: TrainConfig, state_dim: int):
    if cfg.architecture == "conv":
        spec = nets.ConvAeSpec(input_length=state_dim,
                               latent_dim=cfg.latent_dim)
        return nets.ConvAutoencoder(spec, seed=cfg.seed)
    return nets.MlpAutoencoder.create(state_dim, cfg.latent_dim,
                                      cfg.hidden_width, cfg.hidden_depth,
                                      seed=cfg.seed)


def _prune_mask(latent: LatentModelParams, threshold: float):
    model, _ = latent.to_numpy()
    cut = threshold * np.max(np.abs(model.H))
    keep = np.abs(model.H) >= cut
    # symmetrize so skew realizations stay consistent under masking
    keep = keep | np.transpose(keep, (0, 2, 1))
    return keep


def _apply_prune_mask(latent: LatentModelParams, keep: np.ndarray):
    slices = latent.H_raw if latent.stable else latent.H_slices
    for i, h in enumerate(slices):
        h.data *= keep[i]
        if h.grad is not None:
            h.grad *= keep[i]


def fit_quad_embeds(dataset: TrajectoryDataset, cfg: TrainConfig,
                    checkpoint_dir=None, log_every: int = 0):
    """Train the autoencoder and latent operators jointly.

    Returns (autoencoder, realized model, stable params or None, history).
    Checkpoints (when a directory is given) are written every
    ``lr_decay_every`` epochs and at the end.
    """
    if len(dataset.X) == 0:
        raise TrainingError("dataset is empty")
    X, Xdot = dataset.X, dataset.Xdot
    ae = _make_autoencoder(cfg, dataset.state_dim)
    latent = LatentModelParams(cfg.latent_dim, stable=cfg.stable,
                               quadratic=cfg.quadratic, seed=cfg.seed + 1)
    h_slices = latent.H_raw if cfg.stable else latent.H_slices
    if cfg.quadratic and cfg.quadratic_warmup_epochs > 0:
        # curriculum: settle on a linear latent solution first, then let the
        # quadratic terms grow from zero
        for h in h_slices:
            h.data[...] = 0.0
    params = {**ae.parameters(), **latent.parameters()}
    opt = Adam(params, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 2)
    history = TrainHistory()
    n = len(X)
    keep_mask = None
    start = time.perf_counter()

    def write_checkpoint(tag):
        if checkpoint_dir is None:
            return
        out = Path(checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        nets.save_params(ae, out / f"autoencoder_{tag}.json")
        model, stable_p = latent.to_numpy()
        qdyn.save_model(out / f"model_{tag}.json", model, stable_p)

    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg.learning_rate, cfg.lr_decay_every)
        perm = rng.permutation(n)
        sums = {"total": 0.0, "recon": 0.0, "dx_from_dz": 0.0,
                "dz_from_dx": 0.0}
        n_batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            loss, terms = total_loss(X[idx], Xdot[idx], ae, latent,
                                     cfg.lambdas)
            if not np.isfinite(loss.data):
                write_checkpoint("abort")
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}; last checkpoint kept")
            opt.zero_grad()
            T.backward(loss)
            if epoch < cfg.quadratic_warmup_epochs:
                for h in h_slices:
                    if h.grad is not None:
                        h.grad[...] = 0.0
            opt.step(lr)
            if keep_mask is not None:
                _apply_prune_mask(latent, keep_mask)
            sums["total"] += float(loss.data)
            for k, v in terms.items():
                sums[k] += v
            n_batches += 1
        if (cfg.prune and cfg.prune.threshold > 0
                and epoch + 1 == cfg.prune.start_epoch):
            keep_mask = _prune_mask(latent, cfg.prune.threshold)
            _apply_prune_mask(latent, keep_mask)
        history.append(epoch=epoch,
                       loss_total=sums["total"] / n_batches,
                       loss_recon=sums["recon"] / n_batches,
                       loss_dx_from_dz=sums["dx_from_dz"] / n_batches,
                       loss_dz_from_dx=sums["dz_from_dx"] / n_batches,
                       lr=lr,
                       wall_time=time.perf_counter() - start)
        if log_every and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
            print(f"epoch {epoch:5d}  loss {sums['total'] / n_batches:.6f}  "
                  f"lr {lr:.2e}", flush=True)
        if (epoch + 1) % cfg.lr_decay_every == 0:
            write_checkpoint(f"epoch{epoch + 1}")
    write_checkpoint("final")
    model, stable_p = latent.to_numpy()
    if cfg.prune and cfg.prune.threshold > 0 and keep_mask is not None:
        model = qdyn.QuadraticModel(A=model.A, H=model.H * keep_mask,
                                    B=model.B, stable=model.stable)
    return ae, model, stable_p, history
