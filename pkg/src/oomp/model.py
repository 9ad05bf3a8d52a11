"""Synthetic sparse linear models with exactly known population quantities.

A model draws rows ``(x, y)`` with ``x`` in R^d bounded coordinatewise and
``y = <x, beta*> + eps``, ``eps ~ Unif[-eta, eta]`` independent of ``x``.
Two covariance structures are supported:

* ``diagonal`` -- coordinates of ``x`` are i.i.d. Unif[-B, B], so the
  covariance is ``Sigma = (B^2/3) I`` and ``M = B`` bounds ``|x_i|``.
* ``toeplitz`` -- ``x = C u`` with ``u`` i.i.d. Unif[-B, B] and ``C`` the
  lower Cholesky factor of the correlation target ``R_ij = phi^|i-j|``, so
  ``Sigma = (B^2/3) C C^T`` (unit-diagonal up to the ``B^2/3`` scale) and
  ``M = B * max_i sum_j |C_ij|`` bounds ``|x_i|`` almost surely.

The population oracle derived from a model serves both as algorithm input
(eigenvalue bounds, irrepresentability constant) and as the analytic ground
truth for tests: restricted risk minimizers, residual correlations and the
per-feature selection gaps are all closed-form in ``Sigma`` and ``beta*``.

Conventions: features are 0-indexed; a support is an ordered tuple of unique
feature ids paired positionally with its coefficient tuple.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an ordinary dependency
    njit = None

__all__ = [
    "CovarianceSpec",
    "ModelSpec",
    "PopulationOracle",
    "build_oracle",
    "coordinate_bound",
    "load_model_spec",
    "model_spec_from_dict",
    "population_beta",
    "population_w",
    "population_z",
    "restricted_sample_batch",
    "risk_gap",
    "sample",
    "sample_batch",
    "toeplitz_correlation",
]

COV_KINDS = ("diagonal", "toeplitz")

# Relative slack accepted when checking the almost-sure response bound
# ||beta*||_1 * M + eta <= 1; the reference coefficient set attains equality.
_Y_BOUND_TOL = 1e-9


def toeplitz_correlation(d: int, phi: float) -> np.ndarray:
    """Correlation matrix with entries phi^|i-j|."""
    idx = np.arange(d)
    return phi ** np.abs(idx[:, None] - idx[None, :])


def coordinate_bound(cov: CovarianceSpec, d: int) -> float:
    """Almost-sure bound M on |x_i| for a design, without building a model."""
    if cov.kind == "diagonal":
        return cov.halfwidth
    chol = np.linalg.cholesky(toeplitz_correlation(d, cov.phi))
    return cov.halfwidth * float(np.max(np.sum(np.abs(chol), axis=1)))


@dataclass(frozen=True)
class CovarianceSpec:
    """Design structure: correlation kind, raw-draw half-width B, decay base phi."""

    kind: str
    halfwidth: float
    phi: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in COV_KINDS:
            raise ValueError(f"cov kind must be one of {COV_KINDS}, got {self.kind!r}")
        if not (math.isfinite(self.halfwidth) and self.halfwidth > 0):
            raise ValueError("halfwidth must be a positive finite real")
        if not (0.0 <= self.phi < 1.0):
            raise ValueError("phi must lie in [0, 1)")


@dataclass(frozen=True)
class ModelSpec:
    """A concrete sparse linear model: dimension, support, coefficients, design, noise.

    Construction fails if the support/coefficients are malformed or if the
    almost-sure response bound ``||beta*||_1 * M + eta <= 1`` is violated
    (equality is accepted up to a tiny relative slack).
    """

    d: int
    support: tuple[int, ...]
    coefficients: tuple[float, ...]
    cov: CovarianceSpec
    eta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "support", tuple(int(i) for i in self.support))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if len(self.support) != len(set(self.support)):
            raise ValueError("support indices must be unique")
        if any(i < 0 or i >= self.d for i in self.support):
            raise ValueError("support indices must lie in [0, d)")
        if len(self.support) != len(self.coefficients):
            raise ValueError("support and coefficients must have equal length")
        if any(c == 0.0 for c in self.coefficients):
            raise ValueError("coefficients must be nonzero")
        if not (math.isfinite(self.eta) and self.eta >= 0.0):
            raise ValueError("eta must be a nonnegative finite real")
        l1 = sum(abs(c) for c in self.coefficients)
        bound = l1 * self.M + self.eta
        if bound > 1.0 + _Y_BOUND_TOL:
            raise ValueError(
                f"response bound violated: ||beta*||_1 * M + eta = {bound:.6g} > 1"
            )

    @cached_property
    def _mixing(self) -> np.ndarray | None:
        """Lower Cholesky factor of the correlation target; None for diagonal."""
        if self.cov.kind == "diagonal":
            return None
        corr = toeplitz_correlation(self.d, self.cov.phi)
        try:
            chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError as exc:
            raise ValueError(
                "toeplitz correlation matrix is numerically not positive definite"
            ) from exc
        chol.setflags(write=False)
        return chol

    @cached_property
    def M(self) -> float:
        """Exact almost-sure bound on |x_i|."""
        if self._mixing is None:
            return self.cov.halfwidth
        return self.cov.halfwidth * float(np.max(np.sum(np.abs(self._mixing), axis=1)))

    @cached_property
    def beta_full(self) -> np.ndarray:
        beta = np.zeros(self.d)
        beta[list(self.support)] = self.coefficients
        beta.setflags(write=False)
        return beta

    @cached_property
    def _support_sorted(self) -> tuple[np.ndarray, np.ndarray]:
        """(sorted support ids, matching coefficients); canonical response dot."""
        order = np.argsort(self.support)
        ids = np.asarray(self.support, dtype=np.intp)[order]
        coefs = np.asarray(self.coefficients, dtype=float)[order]
        return ids, coefs


# Row draws consume exactly d+1 uniforms each (d coordinates plus the noise
# slot) no matter which coordinates the caller needs, and the row kernels
# below work strictly row by row, so batched draws are bit-identical to the
# equivalent sequence of single draws.  Batches are chunked to keep the
# transient uniform block small.
_CHUNK_ROWS = 8192


def _diag_rows_core(raw, needed, pos, coefs, b, eta, d):
    m = raw.shape[0]
    x = np.empty((m, needed.shape[0]))
    y = np.empty(m)
    for i in range(m):
        for j in range(needed.shape[0]):
            x[i, j] = b * (2.0 * raw[i, needed[j]] - 1.0)
        acc = eta * (2.0 * raw[i, d] - 1.0)
        for j in range(pos.shape[0]):
            acc += coefs[j] * x[i, pos[j]]
        y[i] = acc
    return x, y


def _toep_rows_core(raw, mixt, pos, coefs, b, eta, d):
    # mixt is mixing[needed].T with shape (d, len(needed))
    m = raw.shape[0]
    n = mixt.shape[1]
    x = np.empty((m, n))
    y = np.empty(m)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(d):
                acc += (b * (2.0 * raw[i, t] - 1.0)) * mixt[t, j]
            x[i, j] = acc
        acc = eta * (2.0 * raw[i, d] - 1.0)
        for j in range(pos.shape[0]):
            acc += coefs[j] * x[i, pos[j]]
        y[i] = acc
    return x, y


def _diag_rows_np(raw, needed, pos, coefs, b, eta, d):
    x = b * (2.0 * raw[:, needed] - 1.0)
    y = x[:, pos] @ coefs + eta * (2.0 * raw[:, d] - 1.0)
    return x, y


def _toep_rows_np(raw, mixt, pos, coefs, b, eta, d):
    x = (b * (2.0 * raw[:, :d] - 1.0)) @ mixt
    y = x[:, pos] @ coefs + eta * (2.0 * raw[:, d] - 1.0)
    return x, y


if njit is not None:
    _diag_rows = njit(cache=True)(_diag_rows_core)
    _toep_rows = njit(cache=True)(_toep_rows_core)
else:  # pragma: no cover - numba is an ordinary dependency
    _diag_rows, _toep_rows = _diag_rows_np, _toep_rows_np


@lru_cache(maxsize=256)
def _draw_plan(spec: ModelSpec, coords: tuple[int, ...]):
    """Precomputed index arrays for drawing rows restricted to ``coords``.

    Returns (needed, keep, pos, mixt): the union of coords and support, the
    positions of coords within it, the positions of the sorted support
    within it, and the restricted transposed mixing factor (None when the
    design is diagonal).  ``keep`` is None when it would be the identity.
    """
    s_ids, _ = spec._support_sorted
    needed = np.union1d(np.asarray(coords, dtype=np.intp), s_ids).astype(np.intp)
    keep = np.searchsorted(needed, np.asarray(coords, dtype=np.intp))
    if keep.size == needed.size:
        keep = None
    pos = np.searchsorted(needed, s_ids)
    mixt = None if spec._mixing is None else np.ascontiguousarray(spec._mixing[needed].T)
    needed.setflags(write=False)
    pos.setflags(write=False)
    if keep is not None:
        keep.setflags(write=False)
    return needed, keep, pos, mixt


def _draw_rows(
    spec: ModelSpec, rng: np.random.Generator, size: int, coords: tuple[int, ...]
) -> tuple[np.ndarray, np.ndarray]:
    needed, keep, pos, mixt = _draw_plan(spec, coords)
    _, coefs = spec._support_sorted
    b, eta, d = spec.cov.halfwidth, spec.eta, spec.d
    if size <= _CHUNK_ROWS:
        raw = rng.random((size, d + 1))
        if mixt is None:
            x, y = _diag_rows(raw, needed, pos, coefs, b, eta, d)
        else:
            x, y = _toep_rows(raw, mixt, pos, coefs, b, eta, d)
        return (x if keep is None else x[:, keep]), y
    x = np.empty((size, len(coords)))
    y = np.empty(size)
    done = 0
    while done < size:
        m = min(_CHUNK_ROWS, size - done)
        xs, ys = _draw_rows(spec, rng, m, coords)
        x[done : done + m] = xs
        y[done : done + m] = ys
        done += m
    return x, y


def restricted_sample_batch(
    spec: ModelSpec, rng: np.random.Generator, size: int, coords
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` rows materializing only the ``coords`` coordinates.

    ``coords`` is a sorted unique list of feature ids; support coordinates
    are computed internally when absent (the response needs them) but not
    returned.
    """
    return _draw_rows(spec, rng, size, tuple(int(c) for c in coords))


def sample_batch(
    spec: ModelSpec, rng: np.random.Generator, size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` full rows; bit-identical to ``size`` calls of sample()."""
    return _draw_rows(spec, rng, size, tuple(range(spec.d)))


def sample(spec: ModelSpec, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw one (x, y) row.  Consumes exactly d+1 uniforms from rng."""
    x, y = _draw_rows(spec, rng, 1, tuple(range(spec.d)))
    return x[0], float(y[0])


@dataclass(frozen=True)
class PopulationOracle:
    """Analytic population quantities of a model.

    ``rho`` and ``L`` are the extreme eigenvalues of the full covariance (so
    they bound every principal submatrix by interlacing), ``mu_star`` is the
    irrepresentability constant max_{j not in S*} ||Sigma_S*^-1 Cov(x_S*, x_j)||_1.
    """

    sigma: np.ndarray
    beta_star: np.ndarray
    rho: float
    L: float
    mu_star: float

    @property
    def d(self) -> int:
        return self.beta_star.shape[0]

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.beta_star))


def build_oracle(spec: ModelSpec) -> PopulationOracle:
    b2 = spec.cov.halfwidth**2 / 3.0
    if spec._mixing is None:
        sigma = b2 * np.eye(spec.d)
        rho = lmax = b2
    else:
        sigma = b2 * (spec._mixing @ spec._mixing.T)
        eigs = np.linalg.eigvalsh(sigma)
        rho, lmax = float(eigs[0]), float(eigs[-1])
        if rho <= 0:
            raise ValueError("covariance is numerically not positive definite")
    sigma.setflags(write=False)
    s_star = sorted(spec.support)
    mu = 0.0
    if 0 < len(s_star) < spec.d:
        others = [j for j in range(spec.d) if j not in set(s_star)]
        cross = sigma[np.ix_(s_star, others)]
        w = np.linalg.solve(sigma[np.ix_(s_star, s_star)], cross)
        mu = float(np.max(np.sum(np.abs(w), axis=0)))
    return PopulationOracle(
        sigma=sigma,
        beta_star=spec.beta_full,
        rho=rho,
        L=lmax,
        mu_star=mu,
    )


def _sorted_subset(oracle: PopulationOracle, subset: Iterable[int]) -> list[int]:
    s = sorted(int(i) for i in subset)
    if len(s) != len(set(s)):
        raise ValueError("subset indices must be unique")
    if s and (s[0] < 0 or s[-1] >= oracle.d):
        raise ValueError("subset indices must lie in [0, d)")
    return s


def population_beta(oracle: PopulationOracle, subset: Iterable[int]) -> np.ndarray:
    """Risk-minimizing coefficients restricted to ``subset``, aligned with sorted order.

    Solves Sigma_S beta = (Sigma beta*)_S; raises LinAlgError on a singular
    restriction.  The empty subset yields an empty vector.
    """
    s = _sorted_subset(oracle, subset)
    if not s:
        return np.zeros(0)
    rhs = (oracle.sigma @ oracle.beta_star)[s]
    return np.linalg.solve(oracle.sigma[np.ix_(s, s)], rhs)


def population_z(oracle: PopulationOracle, subset: Iterable[int]) -> np.ndarray:
    """Residual correlations E[x_i (y - <x, beta^S>)] for every feature i."""
    s = _sorted_subset(oracle, subset)
    padded = np.zeros(oracle.d)
    if s:
        padded[s] = population_beta(oracle, s)
    return oracle.sigma @ (oracle.beta_star - padded)


def population_w(oracle: PopulationOracle, subset: Iterable[int]) -> np.ndarray:
    """Per-candidate selection gaps for a strict sub-support ``subset``.

    For each candidate i not in S the gap is
    ``max((1 - mu_star) |Z_i|, |Z_top| - |Z_i|)`` where Z_top is the largest
    in-support residual correlation among the not-yet-selected features.
    Entries on ``subset`` are NaN.  Requires subset to be a strict subset of
    the true support.
    """
    s = set(_sorted_subset(oracle, subset))
    s_star = set(oracle.support)
    if not s <= s_star or s == s_star:
        raise ValueError("subset must be a strict subset of the true support")
    z = np.abs(population_z(oracle, s))
    remaining = sorted(s_star - s)
    z_top = float(np.max(z[remaining]))
    w = np.maximum((1.0 - oracle.mu_star) * z, z_top - z)
    w[sorted(s)] = np.nan
    return w


def risk_gap(oracle: PopulationOracle, subset: Iterable[int], beta: np.ndarray) -> float:
    """Excess risk of ``beta`` (aligned with sorted subset) over the restricted optimum.

    Equals (beta - beta^S)^T Sigma_S (beta - beta^S).
    """
    s = _sorted_subset(oracle, subset)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (len(s),):
        raise ValueError("beta must be aligned with the sorted subset")
    if not s:
        return 0.0
    diff = beta - population_beta(oracle, s)
    return float(diff @ oracle.sigma[np.ix_(s, s)] @ diff)


def model_spec_from_dict(cfg: dict) -> tuple[ModelSpec, int]:
    """Build (ModelSpec, seed) from a plain mapping.

    Expected keys: d, support, coefficients, cov.kind, cov.phi, B, eta, seed.
    """
    try:
        cov_cfg = cfg.get("cov", {})
        spec = ModelSpec(
            d=int(cfg["d"]),
            support=tuple(cfg["support"]),
            coefficients=tuple(cfg["coefficients"]),
            cov=CovarianceSpec(
                kind=str(cov_cfg.get("kind", "diagonal")),
                halfwidth=float(cfg["B"]),
                phi=float(cov_cfg.get("phi", 0.0)),
            ),
            eta=float(cfg["eta"]),
        )
    except KeyError as exc:
        raise ValueError(f"model config is missing key {exc.args[0]!r}") from exc
    return spec, int(cfg.get("seed", 0))


def load_model_spec(path: str | Path) -> tuple[ModelSpec, int]:
    """Read a JSON model config from ``path``."""
    with open(path, "r", encoding="utf-8") as fh:
        return model_spec_from_dict(json.load(fh))
