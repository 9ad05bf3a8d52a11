"""Outer selection loop: round-based feature selection with halving schedules.

``select`` alternates optimization and a feature race at geometrically
tightening tolerances: round q uses confidence budget ``delta / 2^q`` and
accuracy target ``xi0 / 4^q``, so a failed race (meaning the optimization
slack still dominated every arm's confidence radius) simply moves to the next
round.  ``oomp`` grows the selected set one feature at a time, giving the k-th
selection the confidence budget ``delta / (2 (k+1) (k+2))``; these budgets sum
to ``delta / 2`` over all k.

All queries run between isolation barriers labelled ``optim:k=K`` and
``tryselect:k=K``, so the source ledger splits exactly into the two phases.
A cost cap is enforced by the source itself: the query that would overrun
raises, the driver catches, and the partial selection is returned with the
``interrupted`` flag set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .datasource import BudgetExceeded, DataSource, QueryLedger
from .model import PopulationOracle
from .optim import OptimConfig, optim
from .tryselect import ConfParams, try_select_db, try_select_stream

__all__ = [
    "ComplexityLedger",
    "RunResult",
    "SelectConfig",
    "StepStats",
    "oomp",
    "select",
]


@dataclass(frozen=True)
class SelectConfig:
    """Knobs of the selection loop.

    ``mu_star`` and ``L`` feed the race's confidence radii; ``rho`` and ``M``
    travel inside ``optim_cfg``.  ``budget`` caps total ledger cost.
    """

    delta: float
    optim_cfg: OptimConfig
    mu_star: float
    L: float
    xi0: float = 1.0
    setting: str = "stream"
    budget: float | None = None
    log_scale: float = 8.0

    def __post_init__(self) -> None:
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if not (math.isfinite(self.xi0) and self.xi0 > 0):
            raise ValueError("xi0 must be a positive finite real")
        if self.setting not in ("stream", "database"):
            raise ValueError("setting must be 'stream' or 'database'")
        if self.budget is not None and self.budget <= 0:
            raise ValueError("budget must be positive when given")

    @classmethod
    def from_oracle(
        cls,
        oracle: PopulationOracle,
        delta: float,
        M: float,
        *,
        setting: str = "stream",
        iteration_scale: float = 1.0,
        max_T: int = 100_000,
        budget: float | None = None,
        xi0: float = 1.0,
        log_scale: float = 8.0,
    ) -> "SelectConfig":
        return cls(
            delta=delta,
            optim_cfg=OptimConfig(
                rho=oracle.rho, M=M, iteration_scale=iteration_scale, max_T=max_T
            ),
            mu_star=oracle.mu_star,
            L=oracle.L,
            setting=setting,
            budget=budget,
            xi0=xi0,
            log_scale=log_scale,
        )


@dataclass
class StepStats:
    feature: int
    rounds: int
    cost: int


@dataclass
class ComplexityLedger:
    """Query cost split into the optimization and race phases, per phase index."""

    c_optim: int = 0
    c_tryselect: int = 0
    per_k: dict[int, dict[str, int]] = field(default_factory=dict)

    @classmethod
    def from_query_ledger(cls, ledger: QueryLedger) -> "ComplexityLedger":
        out = cls()
        for label, bucket in ledger.per_subroutine.items():
            phase, _, suffix = label.partition(":k=")
            if phase not in ("optim", "tryselect") or not suffix:
                continue
            k = int(suffix)
            slot = out.per_k.setdefault(k, {"optim": 0, "tryselect": 0})
            slot[phase] += bucket.cost
            if phase == "optim":
                out.c_optim += bucket.cost
            else:
                out.c_tryselect += bucket.cost
        return out

    def as_dict(self) -> dict:
        return {
            "c_optim": self.c_optim,
            "c_tryselect": self.c_tryselect,
            "per_k": {str(k): dict(v) for k, v in sorted(self.per_k.items())},
        }


@dataclass
class RunResult:
    S: list[int]
    interrupted: bool
    ledger: ComplexityLedger
    per_step: list[StepStats]

    def as_dict(self) -> dict:
        return {
            "S": list(self.S),
            "interrupted": self.interrupted,
            "per_step": [
                {"feature": s.feature, "rounds": s.rounds, "cost": s.cost}
                for s in self.per_step
            ],
            "ledger": self.ledger.as_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def select(
    subset: Iterable[int],
    delta: float,
    src: DataSource,
    cfg: SelectConfig,
) -> tuple[int, int]:
    """Pick one feature to add to ``subset``; returns (feature, rounds used).

    Loops rounds q = 0, 1, ... with (delta / 2^q, xi0 / 4^q) until a race
    succeeds.  Raises :class:`BudgetExceeded` if the source cap is hit.
    """
    s = sorted(int(i) for i in subset)
    k = len(s)
    race = try_select_stream if cfg.setting == "stream" else try_select_db
    ocfg = cfg.optim_cfg
    q = 0
    while True:
        delta_q = delta / 2.0**q
        xi_q = cfg.xi0 / 4.0**q
        src.begin_subroutine(f"optim:k={k}")
        est = optim(s, delta_q, xi_q, src, ocfg)
        src.begin_subroutine(f"tryselect:k={k}")
        params = ConfParams.for_estimate(
            d=src.spec.d,
            delta=delta_q,
            beta_tilde=est.beta_tilde,
            M=ocfg.M,
            L=cfg.L,
            rho=ocfg.rho,
            mu_star=cfg.mu_star,
            log_scale=cfg.log_scale,
        )
        outcome = race(s, delta_q, est.beta_tilde, xi_q, src, params)
        if outcome.success:
            return int(outcome.selected), q + 1
        q += 1


def oomp(
    delta: float,
    s_star: int,
    src: DataSource,
    cfg: SelectConfig,
) -> RunResult:
    """Select ``s_star`` features one by one; stops early on budget exhaustion."""
    if s_star < 1 or s_star > src.spec.d:
        raise ValueError("s_star must lie in [1, d]")
    if cfg.budget is not None:
        src.cost_cap = cfg.budget
    chosen: list[int] = []
    per_step: list[StepStats] = []
    interrupted = False
    while len(chosen) < s_star:
        k = len(chosen)
        delta_k = delta / (2.0 * (k + 1) * (k + 2))
        cost_before = src.ledger.cost
        try:
            feature, rounds = select(chosen, delta_k, src, cfg)
        except BudgetExceeded:
            interrupted = True
            break
        chosen.append(feature)
        per_step.append(StepStats(feature=feature, rounds=rounds,
                                  cost=src.ledger.cost - cost_before))
    return RunResult(
        S=chosen,
        interrupted=interrupted,
        ledger=ComplexityLedger.from_query_ledger(src.ledger),
        per_step=per_step,
    )
