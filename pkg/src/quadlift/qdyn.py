"""Quadratic dynamical systems and their stability-guaranteeing form.

A model is dz/dt = A z + H (z kron z) + B, with H held as n slices H_i of
size n x n so that H (z kron z) = sum_i z_i * (H_i z).  In stable mode the
operators are realized from unconstrained parameters as A = J - R with J
skew-symmetric, R = L L^T positive semi-definite, and skew-symmetric slices
H_i; such systems cannot increase ||z|| along trajectories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

MODEL_VERSION = 1


class ContractError(ValueError):
    """Raised on dimension or mode violations of a model operation."""


def kron_self(z: np.ndarray) -> np.ndarray:
    """Kronecker square along the trailing axis: entry i*n+j is z_i * z_j."""
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[-1]
    outer = z[..., :, None] * z[..., None, :]
    return outer.reshape(z.shape[:-1] + (n * n,))


@dataclass
class QuadraticModel:
    A: np.ndarray                 # (n, n)
    H: np.ndarray                 # (n, n, n): H[i] is the slice multiplying z_i
    B: Optional[np.ndarray] = None
    stable: bool = False          # realized from StableParams

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.H.shape != (n, n, n):
            raise ContractError(
                f"operator shapes inconsistent: A {self.A.shape}, H {self.H.shape}")
        if self.B is not None:
            self.B = np.asarray(self.B, dtype=np.float64)
            if self.B.shape != (n,):
                raise ContractError(f"B has shape {self.B.shape}, expected ({n},)")
            if self.stable:
                raise ContractError("stable models carry no constant term")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def H_flat(self) -> np.ndarray:
        """Full (n, n*n) matrix acting on z kron z."""
        return np.concatenate(list(self.H), axis=1)

    def rhs(self, z: np.ndarray) -> np.ndarray:
        """A z + sum_i z_i H_i z + B; works for (n,) and batched (N, n)."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.n:
            raise ContractError(
                f"state dim {z.shape[-1]} does not match model dim {self.n}")
        out = z @ self.A.T + np.einsum("...i,ikj,...j->...k", z, self.H, z)
        if self.B is not None:
            out = out + self.B
        return out


def quad_rhs(model: QuadraticModel, z: np.ndarray) -> np.ndarray:
    return model.rhs(z)


@dataclass
class StableParams:
    """Unconstrained parameters behind a guaranteed-stable model."""

    J_raw: np.ndarray             # (n, n)
    L_raw: np.ndarray             # (n, n)
    H_raw: np.ndarray             # (n, n, n)

    def __post_init__(self):
        self.J_raw = np.asarray(self.J_raw, dtype=np.float64)
        self.L_raw = np.asarray(self.L_raw, dtype=np.float64)
        self.H_raw = np.asarray(self.H_raw, dtype=np.float64)
        n = self.J_raw.shape[0]
        if (self.J_raw.shape != (n, n) or self.L_raw.shape != (n, n)
                or self.H_raw.shape != (n, n, n)):
            raise ContractError("StableParams shapes inconsistent")

    @property
    def n(self) -> int:
        return self.J_raw.shape[0]

    @classmethod
    def init(cls, n: int, seed: int = 0, scale: float = 0.01,
             dissipation: float = 0.1) -> "StableParams":
        """Start near a mildly dissipative linear system."""
        rng = np.random.default_rng(seed)
        return cls(J_raw=rng.uniform(-scale, scale, (n, n)),
                   L_raw=dissipation * np.eye(n),
                   H_raw=rng.uniform(-scale, scale, (n, n, n)))


def realize_stable(p: StableParams, ridge: float = 0.0) -> QuadraticModel:
    """A = J - R with J skew, R = L L^T (+ ridge*I), skew slices H_i."""
    J = 0.5 * (p.J_raw - p.J_raw.T)
    R = p.L_raw @ p.L_raw.T
    if ridge:
        R = R + ridge * np.eye(p.n)
    H = 0.5 * (p.H_raw - np.transpose(p.H_raw, (0, 2, 1)))
    return QuadraticModel(A=J - R, H=H, B=None, stable=True)


def energy_rate(model: QuadraticModel, z: np.ndarray) -> float:
    """d/dt (0.5 ||z||^2) = z . rhs(z); requires a model without B."""
    if model.B is not None:
        raise ContractError("energy rate is only defined for models without B")
    z = np.asarray(z, dtype=np.float64)
    return float(z @ model.rhs(z))


# ---------------------------------------------------------------------------
# serialization

def model_to_dict(model: QuadraticModel,
                  params: Optional[StableParams] = None) -> dict:
    if params is not None:
        return {"version": MODEL_VERSION, "mode": "stable", "n": params.n,
                "J_raw": params.J_raw.ravel().tolist(),
                "L_raw": params.L_raw.ravel().tolist(),
                "H_raw": [s.ravel().tolist() for s in params.H_raw]}
    d = {"version": MODEL_VERSION, "mode": "unconstrained", "n": model.n,
         "A": model.A.ravel().tolist(),
         "H": [s.ravel().tolist() for s in model.H],
         "B": model.B.ravel().tolist() if model.B is not None else None}
    return d


def model_from_dict(d: dict):
    """Returns (QuadraticModel, StableParams or None)."""
    if d.get("version") != MODEL_VERSION:
        raise ContractError(f"unsupported model version {d.get('version')}")
    n = d["n"]
    if d["mode"] == "stable":
        p = StableParams(
            J_raw=np.array(d["J_raw"]).reshape(n, n),
            L_raw=np.array(d["L_raw"]).reshape(n, n),
            H_raw=np.array([np.array(s).reshape(n, n) for s in d["H_raw"]]))
        return realize_stable(p), p
    model = QuadraticModel(
        A=np.array(d["A"]).reshape(n, n),
        H=np.array([np.array(s).reshape(n, n) for s in d["H"]]),
        B=None if d["B"] is None else np.array(d["B"]))
    return model, None


def save_model(path, model: QuadraticModel,
               params: Optional[StableParams] = None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, params), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# the lifting benchmark: dx/dt = -x / (1 + x) as an exact quadratic system
# in coordinates y = (x, 1/(1+x), x/(1+x)^2), with x = C y, C = [1, 0, 0].

RATIONAL_PROJECTION = np.array([1.0, 0.0, 0.0])


def rational_rhs(x):
    x = np.asarray(x, dtype=np.float64)
    return -x / (1.0 + x)


def rational_lift(x: float) -> np.ndarray:
    return np.array([x, 1.0 / (1.0 + x), x / (1.0 + x) ** 2])


def rational_lifted_model() -> QuadraticModel:
    """dy = (-y1 y2, y2 y3, y3 (2 y3 - y2)) as a QuadraticModel."""
    n = 3
    H = np.zeros((n, n, n))
    # symmetric split of each product keeps H slices well-defined
    H[0, 0, 1] += -0.5   # slice for z_0: row 0 gets -0.5 * z_1
    H[1, 0, 0] += -0.5   # slice for z_1: row 0 gets -0.5 * z_0
    H[1, 1, 2] += 0.5    # y2 y3 in row 1
    H[2, 1, 1] += 0.5
    H[1, 2, 2] += -0.5   # -y2 y3 in row 2
    H[2, 2, 1] += -0.5
    H[2, 2, 2] += 2.0    # 2 y3^2 in row 2
    return QuadraticModel(A=np.zeros((n, n)), H=H, B=None)
