"""Time integration for data generation and model rollout.

Two methods: classic fixed-step RK4 and adaptive Dormand-Prince 5(4)
(scipy's RK45) with dense output for off-step sampling.  Both abort when
the state norm passes a blow-up guard, raising IntegrationFailure with the
partial trajectory so the caller can classify the rollout as unstable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp


@dataclass
class IntegratorConfig:
    method: str = "rk45-adaptive"     # or "rk4-fixed"
    rtol: float = 1e-3
    atol: float = 1e-6
    max_step: float = np.inf
    first_step: float = 1e-3          # step size for the fixed method
    blowup: float = 1e6

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("rk45-adaptive", "rk4-fixed"):
            raise ValueError(f"unknown method {self.method!r}")


class IntegrationFailure(RuntimeError):
    """Integration aborted (blow-up or step failure).

    Carries the last time for which a valid state is available and the
    trajectory rows computed so far (possibly empty beyond the IC).
    """

    def __init__(self, message: str, last_valid_time: float,
                 partial: np.ndarray, times_completed: np.ndarray):
        super().__init__(message)
        self.last_valid_time = last_valid_time
        self.partial = partial
        self.times_completed = times_completed


def _check_times(sample_times: np.ndarray):
    t = np.asarray(sample_times, dtype=np.float64)
    if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("sample_times must be a strictly ascending 1-D array")
    return t


def integrate(rhs, z0, sample_times, cfg: IntegratorConfig = None) -> np.ndarray:
    """Integrate dz/dt = rhs(z) and return states at the sample times.

    Row k approximates z(sample_times[k]); row 0 is the initial condition.
    """
    cfg = cfg or IntegratorConfig()
    t = _check_times(sample_times)
    z0 = np.asarray(z0, dtype=np.float64)
    if not np.all(np.isfinite(rhs(z0))):
        raise ValueError("rhs is not finite at the initial condition")
    if cfg.method == "rk4-fixed":
        return _integrate_rk4(rhs, z0, t, cfg)
    return _integrate_rk45(rhs, z0, t, cfg)


def _integrate_rk45(rhs, z0, t, cfg):
    def f(_t, y):
        return rhs(y)

    def blowup_event(_t, y):
        return cfg.blowup - float(np.linalg.norm(y))

    blowup_event.terminal = True
    blowup_event.direction = -1

    kwargs = dict(rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step)
    sol = solve_ivp(f, (t[0], t[-1]), z0, method="RK45", t_eval=t,
                    events=blowup_event, **kwargs)
    if sol.status == 0:
        return np.ascontiguousarray(sol.y.T)
    done = len(sol.t)
    partial = np.ascontiguousarray(sol.y.T) if done else z0[None, :].copy()
    times_done = sol.t if done else t[:1]
    last_t = float(sol.t[-1]) if done else float(t[0])
    reason = "state norm exceeded blow-up guard" if sol.status == 1 \
        else f"integrator failed: {sol.message}"
    raise IntegrationFailure(reason, last_t, partial, times_done)


def _integrate_rk4(rhs, z0, t, cfg):
    out = np.empty((len(t), len(z0)))
    out[0] = z = z0.copy()
    for k in range(len(t) - 1):
        span = t[k + 1] - t[k]
        nsub = max(1, int(np.ceil(span / cfg.first_step)))
        h = span / nsub
        for _ in range(nsub):
            k1 = rhs(z)
            k2 = rhs(z + 0.5 * h * k1)
            k3 = rhs(z + 0.5 * h * k2)
            k4 = rhs(z + h * k3)
            z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(z)) or np.linalg.norm(z) > cfg.blowup:
                raise IntegrationFailure(
                    "state norm exceeded blow-up guard",
                    float(t[k]), out[:k + 1].copy(), t[:k + 1].copy())
        out[k + 1] = z
    return out
