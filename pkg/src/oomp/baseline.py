"""Batch greedy selection baselines and their complexity proxies.

``omp`` is the classical batch routine: repeatedly add the feature most
correlated with the current residual, refit least squares on the selected
set, stop when the best absolute correlation falls below a threshold.
``oracle_omp`` is its population idealization, selecting by exact residual
correlations; with an irrepresentability constant below one it provably
stays inside the true support.

``n_omp`` is the sample size sufficient for batch recovery,

    n = ceil(18 sigma^2 log(4 d / delta) / ((1 - mu)^2 rho^2 beta_min^2)),

clamped below at 1, and ``omp_complexity_proxies`` converts it into query
costs comparable to the online ledger: reading all d columns over n rows for
each of s* selection steps, and re-reading the growing selected block for the
refits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, PopulationOracle, population_z, sample_batch

__all__ = [
    "BatchData",
    "OmpResult",
    "draw_batch",
    "n_omp",
    "omp",
    "omp_complexity_proxies",
    "oracle_omp",
]


@dataclass
class BatchData:
    """A fixed design matrix and response vector."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.Y.ndim != 1 or self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("X must be (n, d) and Y (n,) with matching n")


def draw_batch(spec: ModelSpec, n: int, rng: np.random.Generator) -> BatchData:
    x, y = sample_batch(spec, rng, n)
    return BatchData(X=x, Y=y)


@dataclass
class OmpResult:
    S: list[int]
    beta_bar: np.ndarray  # least-squares coefficients aligned with S
    iterations: int


def omp(data: BatchData, eta: float, max_steps: int | None = None) -> OmpResult:
    """Greedy correlation selection with least-squares refits.

    Stops when the best remaining absolute residual correlation drops below
    ``eta`` (or hits exactly zero), when ``max_steps`` features are selected,
    or when no features remain.  Raises LinAlgError if a refit is
    rank-deficient.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    X, Y = data.X, data.Y
    d = X.shape[1]
    chosen: list[int] = []
    beta = np.zeros(0)
    resid = Y.copy()
    while True:
        if max_steps is not None and len(chosen) >= max_steps:
            break
        if len(chosen) == d:
            break
        corr = np.abs(X.T @ resid)
        if chosen:
            corr[chosen] = -np.inf
        best = int(np.argmax(corr))
        if corr[best] < eta or corr[best] <= 0.0:
            break
        chosen.append(best)
        cols = X[:, chosen]
        beta, _, rank, _ = np.linalg.lstsq(cols, Y, rcond=None)
        if rank < len(chosen):
            raise np.linalg.LinAlgError(
                f"rank-deficient refit on {len(chosen)} selected columns"
            )
        resid = Y - cols @ beta
    return OmpResult(S=chosen, beta_bar=beta, iterations=len(chosen))


def oracle_omp(
    oracle: PopulationOracle,
    s_star: int | None = None,
    mu: float = 0.0,
    adversarial: bool = False,
) -> list[int]:
    """Population greedy selection by exact residual correlations.

    Default picks the arg-max of |Z|; with ``adversarial=True`` it picks the
    weakest candidate whose |Z| still clears ``mu`` times the maximum (the
    loosest pick permitted at relaxation level ``mu``).  Stops when all
    residual correlations vanish, after ``s_star`` picks, or when no
    candidates remain.
    """
    if not 0.0 <= mu < 1.0:
        raise ValueError("mu must lie in [0, 1)")
    chosen: list[int] = []
    d = oracle.d
    while s_star is None or len(chosen) < s_star:
        if len(chosen) == d:
            break
        z = np.abs(population_z(oracle, chosen))
        if chosen:
            z[chosen] = -np.inf
        z_max = float(np.max(z))
        if z_max <= 1e-12:
            break
        if adversarial:
            band = np.flatnonzero(z >= mu * z_max - 1e-15)
            pick = int(band[np.argmin(z[band])])
        else:
            pick = int(np.argmax(z))
        chosen.append(pick)
    return chosen


def n_omp(
    sigma_noise: float,
    d: int,
    delta: float,
    mu_star: float,
    rho: float,
    beta_min: float,
) -> int:
    """Batch sample size sufficient for exact recovery; at least 1."""
    if not 0.0 <= mu_star < 1.0:
        raise ValueError("mu_star must lie in [0, 1)")
    if rho <= 0 or beta_min <= 0 or not (0.0 < delta < 1.0) or d < 1:
        raise ValueError("invalid batch bound inputs")
    if sigma_noise < 0:
        raise ValueError("sigma_noise must be nonnegative")
    val = (
        18.0
        * sigma_noise**2
        * math.log(4.0 * d / delta)
        / ((1.0 - mu_star) ** 2 * rho**2 * beta_min**2)
    )
    return max(1, math.ceil(val))


def omp_complexity_proxies(s_star: int, d: int, n: int) -> tuple[int, int]:
    """(selection cost, refit cost) of the batch routine in query units.

    Selection reads all d columns over n rows once per step: s* d n.  Refits
    read the selected block of size k over n rows at step k: n s* (s* + 1) / 2.
    """
    if s_star < 1 or d < 1 or n < 1:
        raise ValueError("s_star, d and n must be positive")
    return s_star * d * n, n * s_star * (s_star + 1) // 2
