"""Rollouts through encoder/model/decoder, error measures, stability
classification, and method comparison reports."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .odeint import IntegratorConfig, IntegrationFailure, integrate
from .qdyn import ContractError, QuadraticModel
from .systems import TrajectoryDataset

# log10 of the squared machine epsilon; exact matches are clamped here
ERROR_FLOOR = float(np.log10(np.finfo(np.float64).eps ** 2))


@dataclass
class RolloutResult:
    X: np.ndarray               # decoded trajectory rows (possibly truncated)
    times: np.ndarray           # times actually covered
    aborted: bool               # integrator gave up (blow-up or step failure)


def rollout(encode: Callable, model: QuadraticModel, decode: Callable,
            x0: np.ndarray, sample_times: np.ndarray,
            cfg: Optional[IntegratorConfig] = None) -> RolloutResult:
    """Encode the initial condition, integrate the latent model, decode.

    ``encode``/``decode`` map numpy arrays to numpy arrays (identity
    functions give a plain model rollout)."""
    x0 = np.asarray(x0, dtype=np.float64)
    z0 = np.asarray(encode(x0[None, :])).reshape(-1)
    if z0.shape[0] != model.n:
        raise ContractError(
            f"encoded dim {z0.shape[0]} does not match model dim {model.n}")
    t = np.asarray(sample_times, dtype=np.float64)
    try:
        Z = integrate(model.rhs, z0, t, cfg)
        aborted = False
        covered = t
    except IntegrationFailure as exc:
        Z = exc.partial
        covered = exc.times_completed
        aborted = True
    X = np.asarray(decode(Z))
    return RolloutResult(X=X, times=covered, aborted=aborted)


def error_median_log(X_true: np.ndarray, X_learned: np.ndarray) -> float:
    """log10 of the median elementwise squared deviation, clamped below."""
    X_true, X_learned = np.asarray(X_true), np.asarray(X_learned)
    if X_true.shape != X_learned.shape:
        raise ContractError(
            f"shape mismatch: {X_true.shape} vs {X_learned.shape}")
    med = float(np.median((X_true - X_learned) ** 2))
    if med <= 10.0 ** ERROR_FLOOR:
        return ERROR_FLOOR
    return float(np.log10(med))


def error_relative(X_true: np.ndarray, X_learned: np.ndarray) -> float:
    """Entrywise 2-norm of the deviation, relative to the truth."""
    X_true, X_learned = np.asarray(X_true), np.asarray(X_learned)
    if X_true.shape != X_learned.shape:
        raise ContractError(
            f"shape mismatch: {X_true.shape} vs {X_learned.shape}")
    denom = np.linalg.norm(X_true)
    if denom == 0:
        raise ContractError("ground truth has zero norm")
    return float(np.linalg.norm(X_true - X_learned) / denom)


def classify_stability(trajectory: np.ndarray, training_amplitude: float,
                       aborted: bool = False) -> bool:
    """True when stable: not aborted and bounded by 1e3 x training amplitude
    (strict inequality at the threshold)."""
    if aborted:
        return False
    return not bool(np.any(np.abs(trajectory) > 1e3 * training_amplitude))


# ---------------------------------------------------------------------------
# reports

REPORT_FIELDS = ("method", "ic_index", "error_median_log", "error_relative",
                 "stable", "n_samples")


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)   # dicts with REPORT_FIELDS

    def append(self, **kwargs):
        self.rows.append({k: kwargs[k] for k in REPORT_FIELDS})

    def methods(self):
        seen = []
        for r in self.rows:
            if r["method"] not in seen:
                seen.append(r["method"])
        return seen

    def per_method(self, method: str):
        return [r for r in self.rows if r["method"] == method]

    def errors(self, method: str, include_unstable: bool = False):
        """Per-IC error values; unstable rollouts are excluded by default."""
        return np.array([r["error_median_log"] for r in self.per_method(method)
                         if include_unstable or r["stable"]])

    def unstable_count(self, method: str) -> int:
        return sum(1 for r in self.per_method(method) if not r["stable"])

    def median_error(self, method: str) -> float:
        vals = self.errors(method)
        return float(np.median(vals)) if len(vals) else float("nan")

    def worst_ics(self, method: str, k: int = 4):
        """Initial conditions where the method does worst (largest error)."""
        rows = self.per_method(method)
        rows = sorted(rows, key=lambda r: r["error_median_log"], reverse=True)
        return [r["ic_index"] for r in rows[:k]]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
            w.writeheader()
            for r in self.rows:
                w.writerow(r)

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(method=row["method"], ic_index=int(row["ic_index"]),
                           error_median_log=float(row["error_median_log"]),
                           error_relative=float(row["error_relative"]),
                           stable=row["stable"] in ("True", "true", "1"),
                           n_samples=int(row["n_samples"]))
        return out

    def violin_columns(self):
        """Map method -> per-IC error values (unstable excluded) plus counts."""
        return {m: {"errors": self.errors(m).tolist(),
                    "unstable": self.unstable_count(m)}
                for m in self.methods()}


def compare_methods(predictors: dict, test_dataset: TrajectoryDataset,
                    cfg: Optional[IntegratorConfig] = None,
                    training_amplitude: Optional[float] = None) -> EvalReport:
    """Roll out every method on every test trajectory and score it.

    ``predictors`` maps a method tag to a callable (x0, times) ->
    RolloutResult.  Trajectories the integrator could not complete are
    marked unstable; their errors are computed on nothing (nan) and
    excluded from aggregation by the report."""
    if training_amplitude is None:
        training_amplitude = float(np.max(np.abs(test_dataset.X)))
    report = EvalReport()
    for ic in range(test_dataset.n_traj):
        times, X_true, _ = test_dataset.trajectory(ic)
        for tag, predict in predictors.items():
            res = predict(X_true[0], times)
            full = len(res.X) == len(X_true)
            stable = (full
                      and classify_stability(res.X, training_amplitude,
                                             aborted=res.aborted))
            if full:
                e_med = error_median_log(X_true, res.X)
                e_rel = error_relative(X_true, res.X)
            else:
                e_med, e_rel = float("inf"), float("inf")
            report.append(method=tag, ic_index=ic,
                          error_median_log=e_med, error_relative=e_rel,
                          stable=stable, n_samples=len(res.X))
    return report
