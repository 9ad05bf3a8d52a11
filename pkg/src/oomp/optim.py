"""Projected averaged SGD on the restricted squared risk.

One pass of ``optim`` runs T steps of stochastic gradient descent on
``E (y - <x_S, beta>)^2`` with step sizes ``2 / (rho (t+1))``, projecting onto
the ball of radius ``2 / sqrt(rho)``, and returns the running weighted average
``avg_{t+1} = (1 - nu_t) avg_t + nu_t beta_{t+1}`` with ``nu_t = 2 / (t+1)``.

The step budget is ``T = clamp(ceil(c_T * 21 G^2 log(1/delta) / (rho xi)), 2,
max_T)``, where ``G = a k M^2 / sqrt(rho) + b sqrt(k) M`` bounds the gradient
noise; ``(a, b) = (8, 4)`` by default, with ``(10, 2)`` available as the
published alternative.  ``c_T`` exists because the theoretical constant is
very pessimistic; ``max_T`` caps wall-clock time.  The lower clamp at 2 keeps
the averaged iterate a convex combination of projected iterates (the t = 0
averaging weight is 2, so a single-step run could leave the ball).

Each step queries one fresh row restricted to S plus the response (cost
``|S| + 1``); the whole budget is drawn as one batch, which is accounted and
valued identically to T single queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasource import DataSource

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an ordinary dependency
    njit = None

__all__ = [
    "OptimConfig",
    "OptimResult",
    "gradient_noise_bound",
    "optim",
    "planned_iterations",
    "project_ball",
]


@dataclass(frozen=True)
class OptimConfig:
    """Constants of the optimization routine.

    ``rho``/``M`` come from the population oracle; ``iteration_scale`` (c_T)
    rescales the theoretical step budget and ``max_T`` caps it.
    """

    rho: float
    M: float
    iteration_scale: float = 1.0
    max_T: int = 100_000
    g_coeffs: tuple[float, float] = (8.0, 4.0)
    record_iterates: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rho) and self.rho > 0):
            raise ValueError("rho must be a positive finite real")
        if not (math.isfinite(self.M) and self.M > 0):
            raise ValueError("M must be a positive finite real")
        if not (math.isfinite(self.iteration_scale) and self.iteration_scale > 0):
            raise ValueError("iteration_scale must be positive")
        if self.max_T < 2:
            raise ValueError("max_T must be at least 2")


@dataclass
class OptimResult:
    beta_tilde: np.ndarray
    T_used: int
    target_xi: float
    delta: float
    iterates: list[np.ndarray] | None = None


def gradient_noise_bound(k: int, cfg: OptimConfig) -> float:
    """Almost-sure bound on the stochastic gradient norm over the ball."""
    a, b = cfg.g_coeffs
    return a * k * cfg.M**2 / math.sqrt(cfg.rho) + b * math.sqrt(k) * cfg.M


def planned_iterations(k: int, delta: float, xi: float, cfg: OptimConfig) -> int:
    g = gradient_noise_bound(k, cfg)
    raw = 21.0 * g * g * math.log(1.0 / delta) / (cfg.rho * xi)
    return min(cfg.max_T, max(2, math.ceil(cfg.iteration_scale * raw)))


def project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the centered ball of the given radius."""
    v = np.asarray(v, dtype=float)
    nrm = float(np.linalg.norm(v))
    if nrm <= radius:
        return v.copy()
    return v * (radius / nrm)


def _asgd_core(X, Y, rho, radius):
    """Sequential SGD pass; kept loop-style so numba can compile it as-is."""
    T, k = X.shape
    beta = np.zeros(k)
    avg = np.zeros(k)
    r2 = radius * radius
    for t in range(T):
        eta_t = 2.0 / (rho * (t + 1.0))
        nu_t = 2.0 / (t + 1.0)
        r = -Y[t]
        for j in range(k):
            r += X[t, j] * beta[j]
        step = 2.0 * eta_t * r
        nrm2 = 0.0
        for j in range(k):
            beta[j] -= step * X[t, j]
            nrm2 += beta[j] * beta[j]
        if nrm2 > r2:
            sc = radius / math.sqrt(nrm2)
            for j in range(k):
                beta[j] *= sc
        for j in range(k):
            avg[j] = (1.0 - nu_t) * avg[j] + nu_t * beta[j]
    return beta, avg


_asgd_fast = njit(cache=True)(_asgd_core) if njit is not None else _asgd_core


def _asgd_recorded(X, Y, rho, radius):
    """Same pass as :func:`_asgd_core`, returning the projected iterates."""
    T, k = X.shape
    beta = np.zeros(k)
    avg = np.zeros(k)
    iterates = []
    for t in range(T):
        eta_t = 2.0 / (rho * (t + 1.0))
        nu_t = 2.0 / (t + 1.0)
        r = float(X[t] @ beta) - Y[t]
        step = 2.0 * eta_t * r
        beta = beta - step * X[t]
        nrm2 = float(beta @ beta)
        if nrm2 > radius * radius:
            beta = beta * (radius / math.sqrt(nrm2))
        avg = (1.0 - nu_t) * avg + nu_t * beta
        iterates.append(beta.copy())
    return beta, avg, iterates


def optim(
    subset,
    delta: float,
    xi: float,
    src: DataSource,
    cfg: OptimConfig,
) -> OptimResult:
    """Approximate the restricted risk minimizer on ``subset`` to accuracy xi.

    Returns coefficients aligned with the sorted subset.  The empty subset
    returns an empty vector without touching the source.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if not (math.isfinite(xi) and xi > 0):
        raise ValueError("xi must be a positive finite real")
    s = sorted(int(i) for i in subset)
    if len(s) != len(set(s)):
        raise ValueError("subset indices must be unique")
    k = len(s)
    if k == 0:
        return OptimResult(np.zeros(0), 0, xi, delta, [] if cfg.record_iterates else None)
    T = planned_iterations(k, delta, xi, cfg)
    block = src.query_new_batch(s + [src.response_index], T)
    X = np.ascontiguousarray(block[:, :k])
    Y = np.ascontiguousarray(block[:, k])
    radius = 2.0 / math.sqrt(cfg.rho)
    if cfg.record_iterates:
        _, avg, iterates = _asgd_recorded(X, Y, cfg.rho, radius)
        return OptimResult(avg, T, xi, delta, iterates)
    _, avg = _asgd_fast(X, Y, cfg.rho, radius)
    return OptimResult(avg, T, xi, delta, None)
