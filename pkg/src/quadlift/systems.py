"""Benchmark systems, exact derivative fields, and dataset generation.

Datasets store states together with the *exact* right-hand side evaluated
at those states (never finite-differenced), plus enough metadata to rebuild
them bit-for-bit from (system, seed, config).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .odeint import IntegratorConfig, IntegrationFailure, integrate

DATASET_VERSION = 1


class DatasetError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# right-hand sides

def pendulum_rhs(x):
    """Damped pendulum in first-order form, x = (velocity, angle)."""
    x = np.asarray(x, dtype=np.float64)
    return np.stack([-np.sin(x[..., 1]) - 0.025 * x[..., 0], x[..., 0]], axis=-1)


def lv_rhs(s):
    """Dissipative Lotka-Volterra in log coordinates, s = (q, p)."""
    s = np.asarray(s, dtype=np.float64)
    q, p = s[..., 0], s[..., 1]
    return np.stack([-np.exp(p) - 0.05 * q + 1.0,
                     np.exp(q) - 0.05 * p - 2.0], axis=-1)


@dataclass
class BurgersGrid:
    """Interior grid for u_t + u u_x + u^3 u_x = u_xx on (0, 1), u(0)=u(1)=0."""

    n_points: int = 256

    @property
    def h(self) -> float:
        return 1.0 / (self.n_points + 1)

    @property
    def x(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_points + 1)


def burgers_rhs(grid: BurgersGrid, u):
    """Central-difference semi-discretization with zero Dirichlet ghosts."""
    u = np.asarray(u, dtype=np.float64)
    up = np.concatenate([np.zeros(u.shape[:-1] + (1,)), u,
                         np.zeros(u.shape[:-1] + (1,))], axis=-1)
    h = grid.h
    ux = (up[..., 2:] - up[..., :-2]) / (2.0 * h)
    uxx = (up[..., 2:] - 2.0 * u + up[..., :-2]) / (h * h)
    return uxx - (u + u ** 3) * ux


def burgers_ic(f: float, grid: Optional[BurgersGrid] = None) -> np.ndarray:
    """u(x, 0) = 10 sin(pi x f) x (1 - x) sampled on the interior grid."""
    grid = grid or BurgersGrid()
    x = grid.x
    return 10.0 * np.sin(np.pi * x * f) * x * (1.0 - x)


_RHS = {"pendulum": pendulum_rhs, "lv": lv_rhs}


def system_rhs(system: str) -> Callable:
    if system == "burgers":
        grid = BurgersGrid()
        return lambda u: burgers_rhs(grid, u)
    try:
        return _RHS[system]
    except KeyError:
        raise DatasetError(f"unknown system {system!r}") from None


# ---------------------------------------------------------------------------
# datasets

@dataclass
class TrajectoryDataset:
    X: np.ndarray            # (N_total, n) states
    Xdot: np.ndarray         # (N_total, n) exact derivatives
    times: np.ndarray        # (N_total,) timestamps
    offsets: np.ndarray      # (n_traj + 1,) start index of each trajectory
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.shape != self.Xdot.shape or len(self.X) != len(self.times):
            raise DatasetError("states, derivatives and times must align")

    @property
    def n_traj(self) -> int:
        return len(self.offsets) - 1

    @property
    def state_dim(self) -> int:
        return self.X.shape[1]

    def trajectory(self, k: int):
        a, b = self.offsets[k], self.offsets[k + 1]
        return self.times[a:b], self.X[a:b], self.Xdot[a:b]

    def initial_conditions(self) -> np.ndarray:
        return self.X[self.offsets[:-1]]

    def save(self, path):
        path = Path(path)
        np.savez(path, X=self.X, Xdot=self.Xdot, times=self.times,
                 offsets=self.offsets,
                 meta=np.frombuffer(
                     json.dumps({"version": DATASET_VERSION, **self.meta})
                     .encode(), dtype=np.uint8))

    @classmethod
    def load(cls, path) -> "TrajectoryDataset":
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta.pop("version", None) != DATASET_VERSION:
                raise DatasetError(f"unsupported dataset version in {path}")
            return cls(X=z["X"], Xdot=z["Xdot"], times=z["times"],
                       offsets=z["offsets"], meta=meta)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.X, self.Xdot, self.times, self.offsets):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def uniform_ic_sampler(low: float, high: float, dim: int):
    def sample(rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(low, high, size=dim)
    return sample


def generate_dataset(system: str, n_traj: int, samples_per_traj: int,
                     t_span: tuple, ic_sampler: Callable, seed: int,
                     integrator: Optional[IntegratorConfig] = None,
                     extra_meta: Optional[dict] = None) -> TrajectoryDataset:
    """Integrate the ground-truth system from sampled initial conditions.

    Stored derivatives are the exact rhs evaluated at the stored states.
    """
    rhs = system_rhs(system)
    cfg = integrator or IntegratorConfig()
    rng = np.random.default_rng(seed)
    ics = [np.asarray(ic_sampler(rng), dtype=np.float64) for _ in range(n_traj)]
    times = np.linspace(t_span[0], t_span[1], samples_per_traj)
    blocks, dblocks = [], []
    for k, x0 in enumerate(ics):
        try:
            traj = integrate(rhs, x0, times, cfg)
        except IntegrationFailure as exc:
            raise DatasetError(
                f"{system}: ground-truth integration failed for IC #{k} "
                f"({x0}): {exc}") from exc
        blocks.append(traj)
        dblocks.append(rhs(traj))
    if not blocks:
        raise DatasetError("n_traj must be at least 1")
    n = blocks[0].shape[1]
    offsets = samples_per_traj * np.arange(n_traj + 1)
    all_times = np.tile(times, n_traj)
    meta = {"system": system, "seed": seed, "n_traj": n_traj,
            "samples_per_traj": samples_per_traj, "t_span": list(t_span),
            "state_dim": n, **(extra_meta or {})}
    return TrajectoryDataset(X=np.concatenate(blocks),
                             Xdot=np.concatenate(dblocks),
                             times=all_times, offsets=offsets, meta=meta)


# ---------------------------------------------------------------------------
# the experiment protocols

def burgers_frequencies():
    """13 equidistant frequencies in [2, 3]; 3rd/6th/9th/12th are test."""
    f = np.linspace(2.0, 3.0, 13)
    test_idx = [2, 5, 8, 11]
    train_idx = [i for i in range(13) if i not in test_idx]
    return f[train_idx], f[test_idx]


PROTOCOLS = {
    "pendulum": {
        "train": dict(n_traj=50, samples=100, t_span=(0.0, 25.0),
                      ic_range=(-3.0, 3.0)),
        "test": dict(n_traj=100, samples=2000, t_span=(0.0, 75.0),
                     ic_range=(-3.0, 3.0)),
    },
    "lv": {
        "train": dict(n_traj=10, samples=200, t_span=(0.0, 10.0),
                      ic_range=(-1.5, 1.5)),
        "test": dict(n_traj=100, samples=4000, t_span=(0.0, 30.0),
                     ic_range=(-1.5, 1.5)),
    },
    "burgers": {
        "train": dict(samples=1001, t_span=(0.0, 1.5)),
        "test": dict(samples=1001, t_span=(0.0, 1.5)),
    },
}


def generate_split(system: str, split: str, seed: int,
                   n_traj: Optional[int] = None,
                   samples: Optional[int] = None,
                   integrator: Optional[IntegratorConfig] = None
                   ) -> TrajectoryDataset:
    """Dataset per the published protocol for one system and split."""
    try:
        proto = dict(PROTOCOLS[system][split])
    except KeyError:
        raise DatasetError(f"unknown system/split {system!r}/{split!r}") from None
    if samples is not None:
        proto["samples"] = samples
    if system == "burgers":
        f_train, f_test = burgers_frequencies()
        freqs = f_train if split == "train" else f_test
        if n_traj is not None:
            freqs = freqs[:n_traj]
        grid = BurgersGrid()
        times = np.linspace(*proto["t_span"], proto["samples"])
        rhs = system_rhs("burgers")
        cfg = integrator or IntegratorConfig()
        blocks = [integrate(rhs, burgers_ic(f, grid), times, cfg) for f in freqs]
        offsets = proto["samples"] * np.arange(len(freqs) + 1)
        meta = {"system": system, "seed": seed, "split": split,
                "n_traj": len(freqs), "samples_per_traj": proto["samples"],
                "t_span": list(proto["t_span"]),
                "state_dim": grid.n_points,
                "frequencies": list(map(float, freqs))}
        return TrajectoryDataset(X=np.concatenate(blocks),
                                 Xdot=rhs(np.concatenate(blocks)),
                                 times=np.tile(times, len(freqs)),
                                 offsets=offsets, meta=meta)
    if n_traj is not None:
        proto["n_traj"] = n_traj
    lo, hi = proto["ic_range"]
    # train/test draw from independent streams so the splits never overlap
    stream = seed if split == "train" else seed + 10_000
    return generate_dataset(
        system, proto["n_traj"], proto["samples"], proto["t_span"],
        uniform_ic_sampler(lo, hi, 2), stream, integrator,
        extra_meta={"split": split, "ic_range": list(proto["ic_range"])})
