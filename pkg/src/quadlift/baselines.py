"""Comparison methods: quadratic operator inference in the measured
coordinates, linear latent embeddings, and the POD-based reduced models
(linear projection and quadratic-manifold reconstruction).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import train as _train
from .qdyn import ContractError, QuadraticModel, kron_self
from .systems import TrajectoryDataset


# ---------------------------------------------------------------------------
# Kronecker bookkeeping: z_i z_j and z_j z_i are the same regressor, so the
# regression runs on merged columns and the result is expanded back to a
# symmetric operator.

def sym_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i, n)]


def compress_kron(Z: np.ndarray) -> np.ndarray:
    """Merged quadratic features: columns z_i z_j for i <= j."""
    Z = np.atleast_2d(Z)
    n = Z.shape[1]
    return np.column_stack([Z[:, i] * Z[:, j] for i, j in sym_pairs(n)])


def expand_quadratic(Hc: np.ndarray, n: int) -> np.ndarray:
    """Merged coefficients -> symmetric slice form H (n, n, n)."""
    m = Hc.shape[0]
    H = np.zeros((n, m, n))
    for col, (i, j) in enumerate(sym_pairs(n)):
        if i == j:
            H[i, :, i] += Hc[:, col]
        else:
            H[i, :, j] += 0.5 * Hc[:, col]
            H[j, :, i] += 0.5 * Hc[:, col]
    return H


def canonicalize_quadratic(H: np.ndarray) -> np.ndarray:
    """Symmetrize slices so equivalent operators compare equal."""
    return 0.5 * (H + np.transpose(H, (2, 1, 0)))


def _lstsq(D: np.ndarray, Y: np.ndarray, what: str) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(D, Y, rcond=None)
    if rank < D.shape[1]:
        warnings.warn(f"{what}: regression is rank-deficient "
                      f"(rank {rank} < {D.shape[1]}); minimum-norm solution used")
    return coef


def _ridge_lstsq(D: np.ndarray, Y: np.ndarray, rel: float) -> np.ndarray:
    G = D.T @ D
    lam = rel * np.trace(G)
    return np.linalg.solve(G + lam * np.eye(G.shape[0]), D.T @ Y)


# ---------------------------------------------------------------------------
# quadratic operator inference

def fit_quad_opinf(X: np.ndarray, Xdot: np.ndarray,
                   include_constant: bool = True) -> QuadraticModel:
    """Least-squares fit of dX = A X + H (X kron X) + B on (state, derivative)
    pairs; duplicate Kronecker columns are merged before solving."""
    X, Xdot = np.atleast_2d(X), np.atleast_2d(Xdot)
    if X.shape != Xdot.shape:
        raise ContractError(f"states {X.shape} and derivatives {Xdot.shape} differ")
    n = X.shape[1]
    blocks = [X, compress_kron(X)]
    if include_constant:
        blocks.append(np.ones((len(X), 1)))
    D = np.concatenate(blocks, axis=1)
    coef = _lstsq(D, Xdot, "quad-opinf")
    nc = n * (n + 1) // 2
    A = coef[:n].T
    H = expand_quadratic(coef[n:n + nc].T, n)
    B = coef[-1] if include_constant else None
    return QuadraticModel(A=A, H=H, B=B)


def fit_quad_opinf_dataset(dataset: TrajectoryDataset,
                           include_constant: bool = True) -> QuadraticModel:
    return fit_quad_opinf(dataset.X, dataset.Xdot, include_constant)


def fit_linear_embeds(dataset: TrajectoryDataset, cfg: _train.TrainConfig):
    """Same training machinery with the latent model restricted to dz = A z."""
    return _train.fit_quad_embeds(dataset, replace(cfg, quadratic=False))


# ---------------------------------------------------------------------------
# POD and the two projected variants

@dataclass
class PodBasis:
    V: np.ndarray              # (state_dim, r), orthonormal columns
    singular_values: np.ndarray

    @property
    def r(self) -> int:
        return self.V.shape[1]

    def project(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.V

    def reconstruct(self, Z: np.ndarray) -> np.ndarray:
        return np.atleast_2d(Z) @ self.V.T

    def truncation_error(self) -> float:
        """Relative snapshot energy beyond the first r modes."""
        s2 = self.singular_values ** 2
        return float(np.sqrt(s2[self.r:].sum() / s2.sum()))


def pod_basis(snapshots: np.ndarray, r: int) -> PodBasis:
    """Dominant left singular vectors of the snapshot matrix (rows = states
    at sample times)."""
    S = np.atleast_2d(snapshots)
    if r > min(S.shape):
        raise ContractError(f"r={r} exceeds snapshot matrix rank bound {min(S.shape)}")
    U, s, _ = np.linalg.svd(S.T, full_matrices=False)
    return PodBasis(V=U[:, :r].copy(), singular_values=s)


@dataclass
class QuadManifold:
    """Reconstruction x ~ V z + W (z kron z)."""

    V: np.ndarray              # (state_dim, r)
    W: np.ndarray              # (state_dim, r*r), symmetric in the pair index

    def decode(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        return Z @ self.V.T + kron_self(Z) @ self.W.T


def fit_linproj_qopinf(snapshots: np.ndarray, derivatives: np.ndarray,
                       r: int = 4, include_constant: bool = True):
    """Quadratic operator inference in the leading POD coordinates."""
    basis = pod_basis(snapshots, r)
    Z = basis.project(snapshots)
    Zdot = basis.project(derivatives)
    model = fit_quad_opinf(Z, Zdot, include_constant)
    return basis, model


def fit_quadproj_qopinf(snapshots: np.ndarray, derivatives: np.ndarray,
                        r: int = 4, ridge_rel: float = 1e-10,
                        include_constant: bool = True):
    """POD basis, quadratic correction of the reconstruction, and a latent
    quadratic model, fitted in that order."""
    basis = pod_basis(snapshots, r)
    Z = basis.project(snapshots)
    residual = np.atleast_2d(snapshots) - basis.reconstruct(Z)
    Phi = compress_kron(Z)
    Wc = _ridge_lstsq(Phi, residual, ridge_rel).T      # (state_dim, nc)
    W = expand_quadratic(Wc, r)                        # (r, state_dim, r) slices
    W_full = np.concatenate(list(W), axis=1)           # (state_dim, r*r)
    manifold = QuadManifold(V=basis.V, W=W_full)
    model = fit_quad_opinf(Z, basis.project(derivatives), include_constant)
    return manifold, model, basis
