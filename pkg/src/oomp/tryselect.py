"""Empirical-Bernstein feature races over candidate arms.

Given an approximate restricted minimizer ``beta_tilde`` on the current set S,
each candidate feature i carries the statistic ``u = x_i (<x_S, beta_tilde> - y)``
whose mean estimates the (sign-flipped) population residual correlation.  Arms
keep a running mean and a Welford variance accumulator; the confidence radius

    conf(i, n, delta) = sqrt(8 V+ log(c d n^2 / delta) / n)
                        + 28 B log(c d n^2 / delta) / (3 (n - 1))

uses the floored variance ``V+ = max(V, L M^2 / (1000 rho))``, the statistic
bound ``B = M^2 ||beta_tilde||_1 + M``, and log scale ``c`` (8 by default).
It is defined only for n >= 2, so every arm is fed two rows before any test
is evaluated.

Both variants share the same two exit tests:

* failure when the optimization slack dominates the smallest confidence
  radius in sight: ``2 M sqrt(xi) > conf`` (minimum over all arms for the
  stream variant, the current front-runner's radius for the database one);
* success when the front-runner i* = argmax(|mean| + conf) (ties to the
  smallest feature id) satisfies ``|mean| > ((1 + mu) / (1 - mu)) conf``.

The stream variant feeds every arm from each fresh full row (cost d + 1 per
row plus |S| multiplications for the shared residual).  The database variant
pulls one arm at a time: a fresh row restricted to S, the arm, and the
response (cost |S| + 2) when the arm is current, or a single re-read of the
arm's coordinate from a stored row (cost 1) when it lags; residuals of drawn
rows are cached so a lagging arm pairs its re-read coordinate with the
residual of the same row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import IO, Iterable

import numpy as np

from .datasource import DataSource, FeatureSet

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an ordinary dependency
    njit = None

__all__ = [
    "ArmState",
    "ConfParams",
    "PriorityIndex",
    "TrySelectOutcome",
    "conf_radius",
    "try_select_db",
    "try_select_stream",
    "update_arm",
]


@dataclass(frozen=True)
class ConfParams:
    """Constants entering the confidence radius for one race."""

    d: int
    delta: float
    M: float
    L: float
    rho: float
    B_tilde: float
    mu_star: float
    log_scale: float = 8.0

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        for name in ("M", "L", "rho", "log_scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite real")
        if self.B_tilde < self.M:
            raise ValueError("B_tilde must be at least M")
        if not (0.0 <= self.mu_star < 1.0):
            raise ValueError("mu_star must lie in [0, 1)")

    @property
    def v_floor(self) -> float:
        """Variance floor L M^2 / (1000 rho); strictly positive."""
        return self.L * self.M**2 / (1000.0 * self.rho)

    @classmethod
    def for_estimate(
        cls,
        d: int,
        delta: float,
        beta_tilde: np.ndarray,
        M: float,
        L: float,
        rho: float,
        mu_star: float,
        log_scale: float = 8.0,
    ) -> "ConfParams":
        b = M * M * float(np.sum(np.abs(beta_tilde))) + M
        return cls(d=d, delta=delta, M=M, L=L, rho=rho, B_tilde=b,
                   mu_star=mu_star, log_scale=log_scale)


@dataclass
class ArmState:
    """Per-arm pull count, mean statistic and Welford variance accumulators."""

    v_floor: float
    n: int = 0
    z_mean: float = 0.0
    welford_mean: float = 0.0
    welford_m2: float = 0.0
    v_plus: float = 0.0
    conf: float = math.inf

    def __post_init__(self) -> None:
        if self.v_plus < self.v_floor:
            self.v_plus = self.v_floor


def update_arm(arm: ArmState, u: float) -> ArmState:
    """Fold one statistic value into the arm's mean and variance accumulators."""
    arm.n += 1
    n = float(arm.n)
    arm.z_mean += (u - arm.z_mean) / n
    delta = u - arm.welford_mean
    arm.welford_mean += delta / n
    arm.welford_m2 += delta * (u - arm.welford_mean)
    if arm.n >= 2:
        v = arm.welford_m2 / (n - 1.0)
        arm.v_plus = v if v > arm.v_floor else arm.v_floor
    return arm


def _conf_value(v_plus, n: int, params: ConfParams):
    ln = math.log(params.log_scale * params.d * n * n / params.delta)
    return np.sqrt(8.0 * v_plus * ln / n) + 28.0 * params.B_tilde * ln / (3.0 * (n - 1.0))


def conf_radius(arm: ArmState, n: int, params: ConfParams) -> float:
    """Confidence radius of an arm observed ``n >= 2`` times."""
    if n < 2:
        raise ValueError("conf radius requires n >= 2")
    return float(_conf_value(arm.v_plus, n, params))


class PriorityIndex:
    """Fixed-universe argmax index over feature ids with O(log capacity) updates.

    A flat segment tree over ids 0..capacity-1; absent ids hold -inf.  max()
    returns the highest-priority id, breaking ties toward the smallest id.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        size = 1
        while size < capacity:
            size *= 2
        self._size = size
        self._capacity = capacity
        self._val = np.full(2 * size, -np.inf)
        self._arg = np.zeros(2 * size, dtype=np.intp)
        self._arg[size : 2 * size] = np.arange(size)
        for node in range(size - 1, 0, -1):
            self._pull(node)
        self._count = 0

    def _pull(self, node: int) -> None:
        lo, hi = 2 * node, 2 * node + 1
        # >= keeps the left child on ties, i.e. the smaller feature id
        if self._val[lo] >= self._val[hi]:
            self._val[node] = self._val[lo]
            self._arg[node] = self._arg[lo]
        else:
            self._val[node] = self._val[hi]
            self._arg[node] = self._arg[hi]

    def _check_id(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self._capacity:
            raise ValueError(f"id {i} outside universe [0, {self._capacity})")
        return i

    def set(self, i: int, priority: float) -> None:
        """Insert or reprioritize id ``i``."""
        i = self._check_id(i)
        if math.isnan(priority) or priority == -math.inf:
            raise ValueError("priority must not be NaN or -inf")
        node = self._size + i
        if self._val[node] == -np.inf:
            self._count += 1
        self._val[node] = priority
        node //= 2
        while node:
            self._pull(node)
            node //= 2

    def remove(self, i: int) -> None:
        i = self._check_id(i)
        node = self._size + i
        if self._val[node] == -np.inf:
            raise KeyError(i)
        self._val[node] = -np.inf
        self._count -= 1
        node //= 2
        while node:
            self._pull(node)
            node //= 2

    def max(self) -> tuple[int, float]:
        if self._count == 0:
            raise ValueError("index is empty")
        return int(self._arg[1]), float(self._val[1])

    def __contains__(self, i: int) -> bool:
        return 0 <= int(i) < self._capacity and self._val[self._size + int(i)] != -np.inf

    def __len__(self) -> int:
        return self._count


@dataclass
class TrySelectOutcome:
    """Result of one race: exit kind, chosen feature, pull counts, cost.

    ``cost`` is the source-ledger delta of this call; ``rows`` counts rows
    drawn inside the call; ``residual_work`` counts the multiplications spent
    on shared residuals (|S| per computed residual); ``index_ops`` counts
    priority-index updates (database variant only).
    """

    success: bool
    selected: int | None
    pulls: np.ndarray
    cost: dict[str, int]
    rows: int
    residual_work: int
    index_ops: int = 0


def _stream_step(x, resid, arms, z, m, m2, vplus, conf, vfloor, n, log_term, b_coef):
    """Fold one shared row into every arm; return the test statistics.

    b_coef is 28 B_tilde / 3.  Returns (min_conf, best, best_absz, best_conf);
    conf entries and the returned stats are only meaningful once n >= 2.
    """
    min_conf = np.inf
    best = -1
    best_score = -np.inf
    best_absz = 0.0
    best_conf = np.inf
    nf = float(n)
    for t in range(arms.shape[0]):
        i = arms[t]
        u = x[i] * resid
        z[i] += (u - z[i]) / nf
        delta = u - m[i]
        m[i] += delta / nf
        m2[i] += delta * (u - m[i])
        if n >= 2:
            v = m2[i] / (nf - 1.0)
            vp = v if v > vfloor else vfloor
            vplus[i] = vp
            c = math.sqrt(8.0 * vp * log_term / nf) + b_coef * log_term / (nf - 1.0)
            conf[i] = c
            if c < min_conf:
                min_conf = c
            az = abs(z[i])
            score = az + c
            if score > best_score:
                best_score = score
                best = i
                best_absz = az
                best_conf = c
    return min_conf, best, best_absz, best_conf


_stream_step_fast = njit(cache=True)(_stream_step) if njit is not None else _stream_step


def _check_race_args(subset, beta_tilde, xi, src, params):
    if src.spec.d != params.d:
        raise ValueError("params.d does not match the source dimension")
    s = sorted(int(i) for i in subset)
    if len(s) != len(set(s)):
        raise ValueError("subset indices must be unique")
    if s and (s[0] < 0 or s[-1] >= params.d):
        raise ValueError("subset indices must lie in [0, d)")
    arms = np.array([i for i in range(params.d) if i not in set(s)], dtype=np.int64)
    if arms.size == 0:
        raise ValueError("no candidate features remain")
    bt = np.ascontiguousarray(beta_tilde, dtype=float)
    if bt.shape != (len(s),):
        raise ValueError("beta_tilde must be aligned with the sorted subset")
    if not (math.isfinite(xi) and xi > 0):
        raise ValueError("xi must be a positive finite real")
    return s, arms, bt


def _trace_line(trace: IO[str] | None, payload: dict) -> None:
    if trace is not None:
        trace.write(json.dumps(payload) + "\n")


def try_select_stream(
    subset,
    delta: float,
    beta_tilde: np.ndarray,
    xi: float,
    src: DataSource,
    params: ConfParams,
    trace: IO[str] | None = None,
) -> TrySelectOutcome:
    """Race all candidate arms on shared fresh rows until success or failure."""
    if params.delta != delta:
        params = replace(params, delta=delta)
    s, arms, bt = _check_race_args(subset, beta_tilde, xi, src, params)
    d = params.d
    sel = np.asarray(s, dtype=np.intp)
    full = FeatureSet(tuple(range(d + 1)))
    fail_below = 2.0 * params.M * math.sqrt(xi)
    ratio = (1.0 + params.mu_star) / (1.0 - params.mu_star)
    b_coef = 28.0 * params.B_tilde / 3.0
    z = np.zeros(d)
    m = np.zeros(d)
    m2 = np.zeros(d)
    vplus = np.full(d, params.v_floor)
    conf = np.full(d, np.inf)
    before = src.ledger.snapshot()
    n = 0
    while True:
        row = src.query_new(full)
        n += 1
        resid = float(row[sel] @ bt) - float(row[d])
        log_term = math.log(params.log_scale * d * n * n / params.delta)
        min_conf, best, best_absz, best_conf = _stream_step_fast(
            row, resid, arms, z, m, m2, vplus, conf, params.v_floor, n, log_term, b_coef
        )
        if n < 2:
            continue
        _trace_line(trace, {"n": n, "i_star": int(best),
                            "z_abs": best_absz, "conf": best_conf})
        success = None
        if fail_below > min_conf:
            success = False
        elif best_absz > ratio * best_conf:
            success = True
        if success is None:
            continue
        after = src.ledger.snapshot()
        pulls = np.zeros(d, dtype=np.int64)
        pulls[arms] = n
        return TrySelectOutcome(
            success=success,
            selected=int(best) if success else None,
            pulls=pulls,
            cost={
                "new_calls": after[0] - before[0],
                "old_calls": after[1] - before[1],
                "cost": after[2] - before[2],
            },
            rows=n,
            residual_work=n * len(s),
        )


def try_select_db(
    subset,
    delta: float,
    beta_tilde: np.ndarray,
    xi: float,
    src: DataSource,
    params: ConfParams,
    trace: IO[str] | None = None,
) -> TrySelectOutcome:
    """Race candidate arms with per-arm pulls against a row database."""
    if src.mode != "database":
        raise ValueError("try_select_db requires a database-mode source")
    if params.delta != delta:
        params = replace(params, delta=delta)
    s, arm_ids, bt = _check_race_args(subset, beta_tilde, xi, src, params)
    d = params.d
    sel = np.asarray(s, dtype=np.intp)
    full = FeatureSet(tuple(range(d + 1)))
    fail_below = 2.0 * params.M * math.sqrt(xi)
    ratio = (1.0 + params.mu_star) / (1.0 - params.mu_star)
    before = src.ledger.snapshot()

    arms = {int(i): ArmState(v_floor=params.v_floor) for i in arm_ids}
    residuals: list[float] = []
    n_star = 0
    residual_work = 0
    for _ in range(2):
        row = src.query_new(full)
        n_star += 1
        r = float(row[sel] @ bt) - float(row[d])
        residuals.append(r)
        residual_work += len(s)
        for i, arm in arms.items():
            update_arm(arm, float(row[i]) * r)
    index = PriorityIndex(d)
    index_ops = 0
    for i, arm in arms.items():
        arm.conf = conf_radius(arm, arm.n, params)
        index.set(i, abs(arm.z_mean) + arm.conf)
        index_ops += 1

    # per-arm feature sets reused across pulls
    single = {int(i): FeatureSet((int(i),)) for i in arm_ids}
    new_feats = {int(i): FeatureSet(tuple(s) + (int(i), d)) for i in arm_ids}
    pos_of = {}
    for i in arm_ids:
        f = np.asarray(new_feats[int(i)].indices[:-1], dtype=np.intp)
        pos_of[int(i)] = (np.searchsorted(f, sel), int(np.searchsorted(f, i)))

    step = 0
    while True:
        best, _score = index.max()
        arm = arms[best]
        step += 1
        _trace_line(trace, {"step": step, "i_star": best,
                            "z_abs": abs(arm.z_mean), "conf": arm.conf})
        success = None
        if fail_below > arm.conf:
            success = False
        elif abs(arm.z_mean) > ratio * arm.conf:
            success = True
        if success is not None:
            after = src.ledger.snapshot()
            pulls = np.zeros(d, dtype=np.int64)
            for i, a in arms.items():
                pulls[i] = a.n
            return TrySelectOutcome(
                success=success,
                selected=best if success else None,
                pulls=pulls,
                cost={
                    "new_calls": after[0] - before[0],
                    "old_calls": after[1] - before[1],
                    "cost": after[2] - before[2],
                },
                rows=n_star,
                residual_work=residual_work,
                index_ops=index_ops,
            )
        if arm.n == n_star:
            # arm is current: draw a fresh row, cache its residual
            vals = src.query_new(new_feats[best])
            s_pos, i_pos = pos_of[best]
            r = float(vals[s_pos] @ bt) - float(vals[-1])
            residuals.append(r)
            residual_work += len(s)
            n_star += 1
            u = float(vals[i_pos]) * r
        else:
            # arm lags: re-read its coordinate of the next unconsumed row
            # (row arm.n in draw order sits n_star - 1 - arm.n back from the newest)
            xval = float(src.query_old(n_star - 1 - arm.n, single[best])[0])
            u = xval * residuals[arm.n]
        update_arm(arm, u)
        arm.conf = conf_radius(arm, arm.n, params)
        index.set(best, abs(arm.z_mean) + arm.conf)
        index_ops += 1
